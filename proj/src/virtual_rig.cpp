#include "nlmodal/virtual_rig.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "nlmodal/error.hpp"

namespace nlmodal {

void PllConfig::validate() const {
    require(omega_init > 0.0 && std::isfinite(omega_init), "pll: omega_init must be positive");
    require(Kp >= 0.0 && Ki >= 0.0 && Kd >= 0.0, "pll: gains must be non-negative");
    require(target_phase > -kPi && target_phase <= kPi, "pll: target phase outside (-pi, pi]");
    require(lp_cutoff_ratio > 0.0 && lp_cutoff_ratio < 1.0, "pll: lp_cutoff_ratio must be in (0, 1)");
    require(reference_channel >= 0, "pll: negative reference channel");
    require(lock_tolerance > 0.0, "pll: lock tolerance must be positive");
    require(lock_periods >= 0, "pll: lock_periods must be non-negative");
    require(integrator_limit > 0.0, "pll: integrator limit must be positive");
}

PllConfig suggest_pll(double omega, double D, double lp_cutoff_ratio) {
    require(omega > 0.0 && D > 0.0, "suggest_pll: omega and D must be positive");
    PllConfig pll;
    pll.omega_init = omega;
    pll.lp_cutoff_ratio = lp_cutoff_ratio;
    const double slope = D * omega;  // phase sensitivity is 1/slope
    const double lag = 1.0 / slope + 1.0 / (lp_cutoff_ratio * omega);
    pll.Kp = 15.0 * slope;
    pll.Ki = pll.Kp / (2.0 * lag);
    return pll;
}

void LevelSchedule::validate() const {
    require(!levels.empty(), "level schedule is empty");
    for (double l : levels) require(l > 0.0 && std::isfinite(l), "levels must be positive");
    require(hold_periods >= 1, "hold_periods must be at least 1");
    require(wait_periods >= 0, "wait_periods must be non-negative");
}

std::vector<double> LevelSchedule::sequence() const {
    std::vector<double> seq = levels;
    if (direction == SweepDirection::ForwardThenBackward)
        for (auto it = levels.rbegin() + 1; it < levels.rend(); ++it) seq.push_back(*it);
    return seq;
}

std::vector<double> log_levels(double first, double last, int count) {
    require(first > 0.0 && last > 0.0 && count >= 1, "log_levels: positive range and count");
    std::vector<double> out(count);
    for (int k = 0; k < count; ++k) {
        const double t = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
        out[k] = first * std::pow(last / first, t);
    }
    return out;
}

void RigSettings::validate() const {
    require(steps_per_period >= 200, "steps_per_period must be at least 200");
    require(H >= 1, "H must be at least 1");
    require(noise_std >= 0.0, "noise_std must be non-negative");
}

void Demodulator::update(double y, double psi, double Omega, double dt) {
    const double x = ratio_ * Omega * dt;
    const double alpha = -std::expm1(-x);
    i_ += alpha * (2.0 * y * std::cos(psi) - i_);
    q_ += alpha * (2.0 * y * std::sin(psi) - q_);
    time_constants_ += x;
}

DemodulationResult synchronous_demodulate(const std::vector<double>& signal,
                                          const std::vector<double>& psi, double Omega,
                                          double dt, double cutoff_ratio) {
    require(signal.size() == psi.size(), "demodulate: signal and phase lengths differ");
    require(Omega > 0.0 && dt > 0.0 && cutoff_ratio > 0.0, "demodulate: positive rates");
    Demodulator dm(cutoff_ratio);
    DemodulationResult out;
    out.magnitude.reserve(signal.size());
    out.phase.reserve(signal.size());
    for (std::size_t k = 0; k < signal.size(); ++k) {
        dm.update(signal[k], psi[k], Omega, dt);
        out.magnitude.push_back(dm.magnitude());
        out.phase.push_back(dm.phase());
    }
    out.reliable = dm.reliable();
    return out;
}

RigState initial_rig_state(const ModalBeamModel& model, const PllConfig& pll) {
    RigState s;
    s.eta = Eigen::VectorXd::Zero(model.nmod());
    s.eta_dot = Eigen::VectorXd::Zero(model.nmod());
    s.Omega = pll.omega_init;
    s.phase_detector = Demodulator(pll.lp_cutoff_ratio);
    s.velocity_detector = Demodulator(pll.lp_cutoff_ratio);
    s.started = true;
    return s;
}

namespace {

struct Dynamics {
    const ModalBeamModel& model;
    Eigen::VectorXd c;   // 2 zeta omega
    Eigen::VectorXd k;   // omega^2
    Eigen::VectorXd gamma;

    explicit Dynamics(const ModalBeamModel& m)
        : model(m), c(2.0 * m.zeta().cwiseProduct(m.omega())), k(m.omega().cwiseAbs2()),
          gamma(m.gamma()) {}

    Eigen::VectorXd accel(const Eigen::VectorXd& eta, const Eigen::VectorXd& eta_dot,
                          const HystereticState& committed, double base_acc) const {
        Eigen::VectorXd out = -c.cwiseProduct(eta_dot) - k.cwiseProduct(eta) - gamma * base_acc;
        if (!std::holds_alternative<std::monostate>(model.nonlinearity()))
            out -= nonlinear_modal_force(model, eta, eta_dot, committed).g;
        return out;
    }
};

}  // namespace

StepResult simulate_step(const ModalBeamModel& model, const PllConfig& pll,
                         const std::vector<double>& sensors, const StepCommand& cmd,
                         const RigSettings& settings, RigState& state,
                         const AmplitudeControl& amp) {
    pll.validate();
    settings.validate();
    require(!sensors.empty(), "simulate_step: no sensors");
    require(pll.reference_channel < static_cast<int>(sensors.size()),
            "simulate_step: reference channel out of range");
    require(cmd.level >= 0.0 && std::isfinite(cmd.level), "simulate_step: level must be >= 0");
    require(cmd.hold_periods >= 1 && cmd.wait_periods >= 0, "simulate_step: invalid durations");
    for (double x : sensors)
        require(x >= 0.0 && x <= model.config().L, "simulate_step: sensor outside the beam");
    if (!state.started) state = initial_rig_state(model, pll);

    const Dynamics dyn(model);
    const Eigen::MatrixXd S = model.shape_matrix(sensors);
    const Eigen::RowVectorXd ref = S.row(pll.reference_channel);
    const int nsens = static_cast<int>(sensors.size());
    const double dt = 2.0 * kPi / (state.Omega * settings.steps_per_period);
    const double lo = 0.2 * pll.omega_init, hi = 5.0 * pll.omega_init;
    const double windup = pll.integrator_limit * pll.omega_init;

    std::mt19937_64 rng(settings.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(
                                             std::llround(state.time / dt) + 1)));
    std::normal_distribution<double> noise(0.0, settings.noise_std > 0.0 ? settings.noise_std : 1.0);
    auto measure = [&](const Eigen::VectorXd& eta) {
        Eigen::VectorXd y = S * eta;
        if (settings.noise_std > 0.0)
            for (int i = 0; i < nsens; ++i) y[i] += noise(rng);
        return y;
    };

    auto base_command = [&]() {
        if (cmd.kind == LevelKind::BaseDisplacement) return cmd.level;
        // constant base velocity: level is the velocity amplitude
        double corr = 0.0;
        if (cmd.level > 0.0 && state.velocity_detector.reliable()) {
            const double ev = (cmd.level - state.velocity_detector.magnitude()) / cmd.level;
            const double ki = amp.Ki > 0.0 ? amp.Ki : 0.02 * pll.omega_init;
            corr = amp.Kp * ev + ki * state.amp_integral;
        }
        corr = std::clamp(corr, -amp.saturation, amp.saturation);
        return cmd.level * (1.0 + corr) / state.Omega;
    };

    StepResult out;
    LevelRecord& rec = out.record;
    rec.level = cmd.level;
    rec.target_phase = cmd.target_phase;

    const double psi_start = state.psi;
    const double wait_end = psi_start + 2.0 * kPi * cmd.wait_periods;
    const double hold_end = wait_end + 2.0 * kPi * cmd.hold_periods;
    double in_tol_since = state.psi;  // psi at which the current in-tolerance run started
    bool in_tol = false;
    bool saturated = false;

    std::vector<double> hold_psi, hold_time, hold_omega, hold_err, hold_acc;
    std::vector<Eigen::VectorXd> hold_y;
    double run_at_hold_start = 0.0;
    bool hold_started = false;
    long step = 0;

    while (state.psi < hold_end) {
        // Excitation held over the step; the oscillator phase advances linearly.
        const double Om = state.Omega;
        const double qb = base_command();
        state.qb = qb;
        const double psi0 = state.psi;
        auto acc_at = [&](double tau) { return -Om * Om * qb * std::cos(psi0 + Om * tau); };

        const Eigen::VectorXd& x0 = state.eta;
        const Eigen::VectorXd& v0 = state.eta_dot;
        const HystereticState& hs = state.hysteresis;
        const Eigen::VectorXd a1 = dyn.accel(x0, v0, hs, acc_at(0.0));
        const Eigen::VectorXd x2 = x0 + 0.5 * dt * v0, v2 = v0 + 0.5 * dt * a1;
        const Eigen::VectorXd a2 = dyn.accel(x2, v2, hs, acc_at(0.5 * dt));
        const Eigen::VectorXd x3 = x0 + 0.5 * dt * v2, v3 = v0 + 0.5 * dt * a2;
        const Eigen::VectorXd a3 = dyn.accel(x3, v3, hs, acc_at(0.5 * dt));
        const Eigen::VectorXd x4 = x0 + dt * v3, v4 = v0 + dt * a3;
        const Eigen::VectorXd a4 = dyn.accel(x4, v4, hs, acc_at(dt));
        Eigen::VectorXd xn = x0 + dt / 6.0 * (v0 + 2.0 * v2 + 2.0 * v3 + v4);
        Eigen::VectorXd vn = v0 + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        if (std::holds_alternative<Jenkins>(model.nonlinearity()))
            state.hysteresis = nonlinear_modal_force(model, xn, vn, state.hysteresis).state;
        state.eta = std::move(xn);
        state.eta_dot = std::move(vn);
        state.psi += Om * dt;
        state.time += dt;
        ++step;

        if (step % settings.steps_per_period == 0 && !state.eta.allFinite())
            fail(ErrorCode::NonFinite, "rig integration produced a non-finite state");

        const Eigen::VectorXd y = measure(state.eta);
        state.phase_detector.update(y[pll.reference_channel], state.psi, Om, dt);
        const double base_vel = Om * qb * -std::sin(state.psi);
        state.velocity_detector.update(base_vel, state.psi, Om, dt);

        const bool active = state.phase_detector.reliable() && state.phase_detector.magnitude() > 0.0;
        const double err = wrap_angle(state.phase_detector.phase() - cmd.target_phase);
        if (active) {
            state.integral += err * dt;
            if (pll.Ki > 0.0)
                state.integral = std::clamp(state.integral, -windup / pll.Ki, windup / pll.Ki);
            const double derr = (err - state.prev_error) / dt;
            state.Omega = pll.omega_init + pll.Kp * err + pll.Ki * state.integral + pll.Kd * derr;
            state.prev_error = err;
            if (!(state.Omega >= lo && state.Omega <= hi))
                fail(ErrorCode::PllDivergence, "PLL frequency left [0.2, 5] x omega_init");
        }
        if (cmd.kind == LevelKind::BaseVelocity && cmd.level > 0.0 && state.velocity_detector.reliable()) {
            const double ev = (cmd.level - state.velocity_detector.magnitude()) / cmd.level;
            const double ki = amp.Ki > 0.0 ? amp.Ki : 0.02 * pll.omega_init;
            const double corr = amp.Kp * ev + ki * state.amp_integral;
            if (std::abs(corr) >= amp.saturation) saturated = true;
            else state.amp_integral += ev * dt;
        }

        const bool ok = active && std::abs(err) < pll.lock_tolerance;
        if (ok && !in_tol) in_tol_since = state.psi;
        in_tol = ok;

        if (step % settings.steps_per_period == 0) {
            rec.trace_time.push_back(state.time);
            rec.trace_Omega.push_back(state.Omega);
            rec.trace_phase_error.push_back(err);
        }

        if (state.psi > wait_end) {
            if (!hold_started) {
                hold_started = true;
                run_at_hold_start = in_tol ? (psi0 - in_tol_since) / (2.0 * kPi) : 0.0;
                in_tol_since = in_tol ? in_tol_since : state.psi;
            }
            hold_psi.push_back(state.psi);
            hold_time.push_back(state.time);
            hold_omega.push_back(Om);
            hold_err.push_back(err);
            hold_acc.push_back(-Om * Om * qb * std::cos(state.psi));
            hold_y.push_back(y);
        }
    }

    const auto n = static_cast<Eigen::Index>(hold_psi.size());
    Eigen::MatrixXd ys(n, nsens), acc(n, 1);
    for (Eigen::Index k = 0; k < n; ++k) {
        ys.row(k) = hold_y[static_cast<std::size_t>(k)].transpose();
        acc(k, 0) = hold_acc[static_cast<std::size_t>(k)];
    }
    double Omean = 0.0, emean = 0.0, emax = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        Omean += hold_omega[static_cast<std::size_t>(k)];
        emean += hold_err[static_cast<std::size_t>(k)];
        emax = std::max(emax, std::abs(hold_err[static_cast<std::size_t>(k)]));
    }
    Omean /= static_cast<double>(n);
    emean /= static_cast<double>(n);

    rec.Omega = Omean;
    rec.sensors = extract_spectrum(ys, hold_psi, settings.H, Omean);
    const Spectrum base = extract_spectrum(acc, hold_psi, settings.H, Omean);
    rec.qb_hat = base.at(0, 1) / (-Omean * Omean);
    rec.base_distortion = distortion_factor(base, 0);
    rec.base_velocity = Omean * std::abs(rec.qb_hat);
    rec.phase_error_mean = emean;
    rec.phase_error_max = emax;
    rec.amplitude_saturated = saturated;
    const double needed = std::min<double>(pll.lock_periods, cmd.wait_periods);
    rec.locked = cmd.level > 0.0 && emax < pll.lock_tolerance && run_at_hold_start >= needed - 1e-9 &&
                 std::abs(emean) < 0.5 * pll.lock_tolerance;

    if (settings.keep_raw) {
        out.raw.resize(n, 2 + nsens);
        for (Eigen::Index k = 0; k < n; ++k) {
            out.raw(k, 0) = hold_time[static_cast<std::size_t>(k)];
            out.raw(k, 1) = acc(k, 0);
            out.raw.row(k).tail(nsens) = ys.row(k);
        }
        out.sample_rate = 1.0 / dt;
    }
    return out;
}

RigRun run_backbone_test(const ModalBeamModel& model, const PllConfig& pll,
                         const LevelSchedule& schedule, const std::vector<double>& sensors,
                         const RigSettings& settings) {
    schedule.validate();
    RigRun run;
    run.record.sensor_positions = sensors;
    run.record.reference_channel = pll.reference_channel;
    run.record.H = settings.H;
    RigState state = initial_rig_state(model, pll);
    for (double level : schedule.sequence()) {
        StepCommand cmd;
        cmd.level = level;
        cmd.target_phase = pll.target_phase;
        cmd.wait_periods = schedule.wait_periods;
        cmd.hold_periods = schedule.hold_periods;
        StepResult r = simulate_step(model, pll, sensors, cmd, settings, state);
        run.record.levels.push_back(std::move(r.record));
        if (settings.keep_raw) {
            run.raw.push_back(std::move(r.raw));
            run.sample_rates.push_back(r.sample_rate);
        }
    }
    return run;
}

RigRun run_frequency_response_test(const ModalBeamModel& model, const PllConfig& pll,
                                   double velocity_level, const std::vector<double>& phases,
                                   int wait_periods, int hold_periods,
                                   const std::vector<double>& sensors, const RigSettings& settings,
                                   const AmplitudeControl& amp) {
    require(velocity_level > 0.0, "frequency response test: level must be positive");
    require(!phases.empty(), "frequency response test: empty phase sweep");
    for (double p : phases) require(p > -kPi && p < 0.0, "target phases must lie in (-pi, 0)");
    RigRun run;
    run.record.sensor_positions = sensors;
    run.record.reference_channel = pll.reference_channel;
    run.record.H = settings.H;
    RigState state = initial_rig_state(model, pll);
    for (double phase : phases) {
        StepCommand cmd;
        cmd.level = velocity_level;
        cmd.kind = LevelKind::BaseVelocity;
        cmd.target_phase = phase;
        cmd.wait_periods = wait_periods;
        cmd.hold_periods = hold_periods;
        StepResult r = simulate_step(model, pll, sensors, cmd, settings, state, amp);
        run.record.levels.push_back(std::move(r.record));
        if (settings.keep_raw) {
            run.raw.push_back(std::move(r.raw));
            run.sample_rates.push_back(r.sample_rate);
        }
    }
    return run;
}

namespace {

static_assert(std::endian::native == std::endian::little, "raw trace I/O assumes little-endian");

constexpr char kTraceMagic[8] = {'N', 'L', 'M', 'T', 'R', 'A', 'C', 'E'};
constexpr std::uint32_t kTraceVersion = 1;

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) fail(ErrorCode::Io, "raw trace truncated");
    return v;
}

}  // namespace

void write_raw_trace(const std::string& path, double sample_rate, const Eigen::MatrixXd& frames) {
    std::ofstream os(path, std::ios::binary);
    if (!os) fail(ErrorCode::Io, "cannot open " + path);
    os.write(kTraceMagic, sizeof(kTraceMagic));
    put<std::uint32_t>(os, kTraceVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(frames.cols()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(frames.rows()));
    put<double>(os, sample_rate);
    for (Eigen::Index r = 0; r < frames.rows(); ++r)
        for (Eigen::Index c = 0; c < frames.cols(); ++c) put<double>(os, frames(r, c));
    if (!os) fail(ErrorCode::Io, "write failed for " + path);
}

RawTrace read_raw_trace(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) fail(ErrorCode::Io, "cannot open " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kTraceMagic, sizeof(magic)) != 0)
        fail(ErrorCode::Schema, path + " is not a raw trace file");
    if (get<std::uint32_t>(is) != kTraceVersion) fail(ErrorCode::Schema, "unsupported raw trace version");
    const auto channels = get<std::uint32_t>(is);
    const auto frames = get<std::uint64_t>(is);
    RawTrace t;
    t.sample_rate = get<double>(is);
    t.frames.resize(static_cast<Eigen::Index>(frames), channels);
    for (Eigen::Index r = 0; r < t.frames.rows(); ++r)
        for (Eigen::Index c = 0; c < t.frames.cols(); ++c) t.frames(r, c) = get<double>(is);
    return t;
}

}  // namespace nlmodal
