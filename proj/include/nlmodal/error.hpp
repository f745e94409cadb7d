#pragma once

#include <stdexcept>
#include <string>

namespace nlmodal {

enum class ErrorCode {
    InvalidArgument,
    RootFinding,
    NonFinite,
    NoConvergence,
    RankDeficient,
    NoResponse,
    IndeterminatePhase,
    PllDivergence,
    OutOfRange,
    Schema,
    Io,
};

const char* to_string(ErrorCode code);

/// Exception carrying a machine-readable code next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorCode::InvalidArgument, what);
}

}  // namespace nlmodal
