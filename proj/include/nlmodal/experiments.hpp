#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nlmodal/config.hpp"
#include "nlmodal/csv.hpp"

namespace nlmodal {

struct ArtifactEntry {
    std::string file;  ///< relative to the output directory
    std::string description;
    long long rows = 0;
};

struct RawTraceEntry {
    std::string file;
    double sample_rate = 0.0;
    long long channels = 0;
    long long frames = 0;
};

struct RunManifest {
    std::string experiment;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string status = "ok";  ///< ok | failed
    std::string error_code;
    std::string error_message;
    std::vector<ArtifactEntry> artifacts;
    std::vector<RawTraceEntry> raw_traces;
    std::map<std::string, std::string> versions;
    std::vector<std::pair<std::string, double>> timings;  ///< stage, seconds

    bool ok() const { return status == "ok"; }
    std::string to_json() const;
};

/// Runs the configured experiment into `out_dir` and writes manifest.json next to the
/// artifacts. Module errors are recorded in the manifest and leave earlier artifacts in
/// place; the config is validated before anything is written.
RunManifest run_experiment(const ExperimentConfig& config, const std::string& out_dir, int threads = 1);

/// Runs fn(0..n-1) on up to `threads` workers; the first exception is rethrown.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

struct CompareSpec {
    /// Column used to align rows by linear interpolation of the reference; empty
    /// compares row by row.
    std::string key;
    std::map<std::string, double> tolerances;  ///< relative, per column
    double default_tolerance = 0.0;
};

struct ColumnReport {
    std::string column;
    double max_rel_error = 0.0;
    long long worst_row = -1;
    double tolerance = 0.0;
    bool pass = true;
};

struct CompareReport {
    std::vector<ColumnReport> columns;
    long long rows_compared = 0;
    long long rows_skipped = 0;  ///< candidate rows outside the reference key range
    bool pass = true;

    std::string to_text() const;
};

/// Per-column relative errors of `candidate` against `reference`. Throws Schema when a
/// compared column is missing or, without a key, when the layouts differ.
CompareReport compare_tables(const CsvTable& reference, const CsvTable& candidate, const CompareSpec& spec);
/// Parses "col=tol,col=tol".
std::map<std::string, double> parse_tolerances(const std::string& text);

}  // namespace nlmodal
