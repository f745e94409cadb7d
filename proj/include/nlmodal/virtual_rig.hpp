#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlmodal/beam_model.hpp"
#include "nlmodal/numerics.hpp"
#include "nlmodal/spectrum.hpp"
#include "nlmodal/test_record.hpp"

namespace nlmodal {

/// Phase-locked loop acting on the demodulated phase of one sensor relative to the
/// base displacement. Omega = omega_init + Kp e + Ki int(e) + Kd de/dt.
struct PllConfig {
    double omega_init = 1.0;
    double Kp = 0.0;  ///< [1/s]
    double Ki = 0.0;  ///< [1/s^2]
    double Kd = 0.0;  ///< [-]
    double target_phase = -0.5 * kPi;
    double lp_cutoff_ratio = 0.01;
    int reference_channel = 0;
    double lock_tolerance = kPi / 180.0;  ///< [rad]
    int lock_periods = 50;
    /// Anti-windup: |Ki int(e)| is clamped to this fraction of omega_init.
    double integrator_limit = 0.8;

    void validate() const;
};

/// Gains for a loop whose phase responds to Omega with slope -1/(D omega) through
/// the oscillator and a first-order demodulation filter.
PllConfig suggest_pll(double omega, double D, double lp_cutoff_ratio = 0.01);

enum class SweepDirection { Forward, ForwardThenBackward };

struct LevelSchedule {
    std::vector<double> levels;
    int wait_periods = 2000;
    int hold_periods = 300;
    SweepDirection direction = SweepDirection::Forward;

    void validate() const;
    /// Levels in execution order.
    std::vector<double> sequence() const;
};

/// Log-spaced levels from first to last (inclusive).
std::vector<double> log_levels(double first, double last, int count);

struct RigSettings {
    int steps_per_period = 256;
    int H = 7;
    double noise_std = 0.0;  ///< additive white sensor noise [m]
    std::uint64_t seed = 0;
    bool keep_raw = false;   ///< keep hold-window samples of every step

    void validate() const;
};

/// Base velocity level controller for constant-level frequency-response tests.
/// Correction c = Kp ev + Ki int(ev) on the relative velocity error ev, command
/// q_b = V (1 + c) / Omega, |c| limited to `saturation`.
struct AmplitudeControl {
    double Kp = 0.2;
    double Ki = 0.0;  ///< [1/s]; zero selects 0.02 omega_init
    double saturation = 0.5;
};

/// First-order low-pass I/Q detector of the fundamental relative to phase psi.
class Demodulator {
public:
    explicit Demodulator(double cutoff_ratio) : ratio_(cutoff_ratio) {}

    void update(double y, double psi, double Omega, double dt);
    void reset() { i_ = q_ = 0.0; time_constants_ = 0.0; }

    cdouble estimate() const { return {i_, -q_}; }
    double magnitude() const { return std::abs(estimate()); }
    double phase() const { return std::arg(estimate()); }
    /// Elapsed filter time constants since reset.
    double time_constants() const { return time_constants_; }
    bool reliable() const { return time_constants_ >= 3.0; }

private:
    double ratio_;
    double i_ = 0.0;
    double q_ = 0.0;
    double time_constants_ = 0.0;
};

struct DemodulationResult {
    std::vector<double> magnitude;
    std::vector<double> phase;
    bool reliable = false;
};

DemodulationResult synchronous_demodulate(const std::vector<double>& signal,
                                          const std::vector<double>& psi, double Omega,
                                          double dt, double cutoff_ratio);

/// Full simulator state carried between excitation steps.
struct RigState {
    Eigen::VectorXd eta;
    Eigen::VectorXd eta_dot;
    HystereticState hysteresis;
    double psi = 0.0;
    double time = 0.0;
    double Omega = 0.0;
    double integral = 0.0;
    double prev_error = 0.0;
    double amp_integral = 0.0;
    double qb = 0.0;
    Demodulator phase_detector{0.01};
    Demodulator velocity_detector{0.01};
    bool started = false;
};

RigState initial_rig_state(const ModalBeamModel& model, const PllConfig& pll);

enum class LevelKind { BaseDisplacement, BaseVelocity };

struct StepCommand {
    double level = 0.0;
    LevelKind kind = LevelKind::BaseDisplacement;
    double target_phase = -0.5 * kPi;
    int wait_periods = 0;
    int hold_periods = 1;
};

struct StepResult {
    LevelRecord record;
    Eigen::MatrixXd raw;      ///< hold samples: time, base acceleration, sensors
    double sample_rate = 0.0;
};

/// Integrates one excitation step (wait, then hold) from `state` and updates it.
StepResult simulate_step(const ModalBeamModel& model, const PllConfig& pll,
                         const std::vector<double>& sensors, const StepCommand& cmd,
                         const RigSettings& settings, RigState& state,
                         const AmplitudeControl& amp = {});

struct RigRun {
    TestRecord record;
    std::vector<Eigen::MatrixXd> raw;
    std::vector<double> sample_rates;
};

RigRun run_backbone_test(const ModalBeamModel& model, const PllConfig& pll,
                         const LevelSchedule& schedule, const std::vector<double>& sensors,
                         const RigSettings& settings);

/// Constant base-velocity test swept over target phases.
RigRun run_frequency_response_test(const ModalBeamModel& model, const PllConfig& pll,
                                   double velocity_level, const std::vector<double>& phases,
                                   int wait_periods, int hold_periods,
                                   const std::vector<double>& sensors, const RigSettings& settings,
                                   const AmplitudeControl& amp = {});

/// Raw trace file: "NLMTRACE" magic, u32 version, u32 channels, u64 frames, f64 sample
/// rate, then frames x channels interleaved f64, all little-endian.
void write_raw_trace(const std::string& path, double sample_rate, const Eigen::MatrixXd& frames);

struct RawTrace {
    double sample_rate = 0.0;
    Eigen::MatrixXd frames;
};
RawTrace read_raw_trace(const std::string& path);

}  // namespace nlmodal
