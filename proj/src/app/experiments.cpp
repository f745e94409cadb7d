#include "nlmodal/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <Eigen/Core>
#include "json.hpp"

#include "nlmodal/error.hpp"
#include "nlmodal/io.hpp"
#include "nlmodal/nmrom.hpp"

#ifndef NLMODAL_VERSION
#define NLMODAL_VERSION "0.0.0"
#endif

namespace nlmodal {

namespace fs = std::filesystem;

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int workers = std::clamp(threads, 1, n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["experiment"] = experiment;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["status"] = status;
    if (!ok()) j["error"] = {{"code", error_code}, {"message", error_message}};
    j["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& a : artifacts)
        j["artifacts"].push_back({{"file", a.file}, {"description", a.description}, {"rows", a.rows}});
    j["raw_traces"] = nlohmann::ordered_json::array();
    for (const auto& r : raw_traces)
        j["raw_traces"].push_back(
            {{"file", r.file}, {"sample_rate", r.sample_rate}, {"channels", r.channels}, {"frames", r.frames}});
    j["versions"] = versions;
    j["timings"] = nlohmann::ordered_json::object();
    for (const auto& [stage, sec] : timings) j["timings"][stage] = sec;
    return j.dump(2) + "\n";
}

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) { return format_number(v); }
std::string num(long long v) { return format_number(v); }

double rel_error(double value, double ref) { return std::abs(value - ref) / std::abs(ref); }

/// Output directory bookkeeping shared by all experiments.
class Outputs {
public:
    Outputs(std::string dir, std::string hash, RunManifest& manifest)
        : dir_(std::move(dir)), hash_(std::move(hash)), manifest_(manifest) {}

    void csv(const std::string& file, const CsvTable& table, const std::string& description) {
        std::lock_guard<std::mutex> lock(mu_);
        write_csv((fs::path(dir_) / file).string(), table, hash_);
        manifest_.artifacts.push_back({file, description, static_cast<long long>(table.rows.size())});
    }

    void text(const std::string& file, const std::string& body, const std::string& description) {
        std::lock_guard<std::mutex> lock(mu_);
        std::ofstream os(fs::path(dir_) / file, std::ios::binary);
        if (!os) fail(ErrorCode::Io, "cannot write " + file);
        os << "# config_hash=" << hash_ << "\n" << body;
        manifest_.artifacts.push_back({file, description, 0});
    }

    void trace(const std::string& file, double rate, const Eigen::MatrixXd& frames) {
        std::lock_guard<std::mutex> lock(mu_);
        const fs::path p = fs::path(dir_) / file;
        fs::create_directories(p.parent_path());
        write_raw_trace(p.string(), rate, frames);
        manifest_.raw_traces.push_back(
            {file, rate, static_cast<long long>(frames.cols()), static_cast<long long>(frames.rows())});
    }

    void timed(const std::string& stage, const std::function<void()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::lock_guard<std::mutex> lock(mu_);
        manifest_.timings.emplace_back(stage, s);
    }

private:
    std::string dir_;
    std::string hash_;
    RunManifest& manifest_;
    std::mutex mu_;
};

struct Context {
    const ExperimentConfig& config;
    Outputs& out;
    int threads;
};

std::uint64_t branch_seed(std::uint64_t seed, int branch) {
    return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(branch + 1));
}

LevelSchedule build_schedule(const ExperimentConfig& c) {
    LevelSchedule s;
    s.levels = c.schedule.levels;
    s.wait_periods = c.schedule.wait_periods;
    s.hold_periods = c.schedule.hold_periods;
    s.direction = c.schedule.direction == "forward" ? SweepDirection::Forward : SweepDirection::ForwardThenBackward;
    return s;
}

RigSettings rig_settings(const ExperimentConfig& c, int branch) {
    RigSettings s = c.rig;
    s.seed = branch_seed(c.seed, branch);
    s.keep_raw = c.raw_traces;
    return s;
}

AmplitudeAxis plot_axis(const ExperimentConfig& c) {
    const auto xs = sensor_positions(c);
    AmplitudeAxis axis;
    axis.x = xs.empty() ? c.beam.beam.L : xs[static_cast<std::size_t>(c.sensors.plot - 1)];
    axis.scale = amplitude_scale(c);
    axis.label = "amp_plot";
    return axis;
}

const SensorSet& find_set(const ExperimentConfig& c, const std::string& name) {
    for (const auto& s : c.sensors.sets)
        if (s.name == name) return s;
    fail(ErrorCode::Schema, "unknown sensor set '" + name + "'");
}

IdentificationSetup setup_for(const ExperimentConfig& c, const SensorSet& set, Method method) {
    IdentificationSetup s;
    s.method = method;
    s.sensor_set = set.name;
    for (int i : set.sensors) s.channels.push_back(i - 1);
    s.quadrature = c.identification.quadrature;
    if (s.quadrature == Quadrature::Trapezoidal)
        s.known_zero_boundaries = supported_ends(c.beam.beam.boundary, c.beam.beam.L);
    s.plot_channel = c.sensors.plot - 1;
    return s;
}

std::string identified_name(const IdentifiedBackbone& bb) {
    return "identified_" + bb.sensor_set + "_" + to_string(bb.method) + ".csv";
}

/// Every configured sensor set with every configured estimator.
std::vector<IdentifiedBackbone> identify_all(const Context& ctx, const TestRecord& record,
                                             const ModalBeamModel& model) {
    const auto& c = ctx.config;
    std::vector<std::pair<const SensorSet*, Method>> jobs;
    for (const auto& set : c.sensors.sets)
        for (Method m : c.identification.methods) jobs.emplace_back(&set, m);
    std::vector<IdentifiedBackbone> out(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), ctx.threads, [&](int k) {
        const auto& [set, m] = jobs[static_cast<std::size_t>(k)];
        try {
            out[static_cast<std::size_t>(k)] = identify_backbone(record, model, setup_for(c, *set, m));
        } catch (const Error& e) {
            fail(e.code(), "sensor set " + set->name + ", " + to_string(m) + ": " + e.what());
        }
    });
    return out;
}

void write_identified(const Context& ctx, const std::vector<IdentifiedBackbone>& all) {
    const double scale = amplitude_scale(ctx.config);
    for (const auto& bb : all)
        ctx.out.csv(identified_name(bb), identified_table(bb, scale),
                    "identified backbone, sensor set " + bb.sensor_set + ", " + to_string(bb.method));
}

void write_traces(const Context& ctx, const RigRun& run, const std::string& prefix) {
    if (!ctx.config.raw_traces) return;
    for (std::size_t k = 0; k < run.raw.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof name, "traces/%s_step%03zu.bin", prefix.c_str(), k + 1);
        ctx.out.trace(name, run.sample_rates[k], run.raw[k]);
    }
}

// ---------------------------------------------------------------------------------------

void run_convergence(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& cv = c.convergence;
    const double zeta = c.beam.beam.zeta.empty() ? 0.01 : c.beam.beam.zeta.front();

    struct Job {
        const ConvergenceCase* cc;
        int mode;
    };
    std::vector<Job> jobs;
    for (const auto& cc : cv.cases)
        for (int m : cc.modes) jobs.push_back({&cc, m});

    const char* estimators[] = {"rectangular", "trapezoidal", "chebyshev-gauss", "model-based"};
    std::vector<std::vector<std::vector<std::string>>> rows(jobs.size());
    parallel_for(static_cast<int>(jobs.size()), ctx.threads, [&](int k) {
        const Job& job = jobs[static_cast<std::size_t>(k)];
        BeamConfig bc = c.beam.beam;
        bc.boundary = job.cc->boundary;
        bc.nmod = job.cc->model_modes;
        bc.zeta.assign(static_cast<std::size_t>(bc.nmod), zeta);
        const ModalBeamModel model(bc, std::monostate{});
        const int j = job.mode - 1;
        const double gamma = model.gamma()(j);
        if (std::abs(gamma) < 1e-12 * model.gamma().cwiseAbs().maxCoeff())
            fail(ErrorCode::Schema, "mode " + std::to_string(job.mode) + " of the " + to_string(bc.boundary) +
                                        " beam is not excited by base motion");
        // Phase-resonant response of the isolated mode: eta = -i Gamma qb / (2 zeta).
        const cdouble qb(1e-3, 0.0);
        const cdouble eta = cdouble(0.0, -1.0) * gamma * qb / (2.0 * zeta);
        auto response = [&](const std::vector<double>& xs) {
            Eigen::VectorXcd q(static_cast<Eigen::Index>(xs.size()));
            for (std::size_t i = 0; i < xs.size(); ++i) q[static_cast<Eigen::Index>(i)] = model.shape(j, xs[i]) * eta;
            return q;
        };
        for (int n = 1; n <= cv.max_sensors; ++n) {
            for (const char* est : estimators) {
                double D = kNan;
                try {
                    const std::string e = est;
                    if (e == "model-based") {
                        const auto xs = equidistant_positions(n, bc.L, bc.boundary);
                        std::vector<int> modes;
                        for (int m = 0; m < std::min(n, bc.nmod); ++m) modes.push_back(m);
                        D = damping_model_based(response(xs), qb, make_basis(model, xs, modes)).D;
                    } else {
                        SensorLayout layout;
                        layout.quadrature = quadrature_from_string(e);
                        if (layout.quadrature == Quadrature::ChebyshevGauss) {
                            layout.positions = chebyshev_gauss_positions(n, bc.L);
                        } else {
                            layout.positions = equidistant_positions(n, bc.L, bc.boundary);
                            if (layout.quadrature == Quadrature::Trapezoidal)
                                layout.known_zero_boundaries = supported_ends(bc.boundary, bc.L);
                        }
                        D = damping_model_free(response(layout.positions), qb, quadrature_weights(layout, bc.L));
                    }
                } catch (const Error& err) {
                    if (err.code() != ErrorCode::NoResponse && err.code() != ErrorCode::RankDeficient) throw;
                }
                rows[static_cast<std::size_t>(k)].push_back({to_string(bc.boundary), num(static_cast<long long>(job.mode)),
                                                             num(static_cast<long long>(bc.nmod)),
                                                             num(static_cast<long long>(n)), est, num(D),
                                                             num(rel_error(D, zeta))});
            }
        }
    });

    CsvTable t;
    t.comments.push_back("table=convergence");
    t.comments.push_back("zeta=" + num(zeta));
    t.add_column("boundary", "beam supports");
    t.add_column("mode", "target mode (1-based)");
    t.add_column("model_modes", "modes in the linear model");
    t.add_column("nsens", "number of sensors");
    t.add_column("estimator", "rectangular | trapezoidal | chebyshev-gauss (model-free) or model-based");
    t.add_column("D", "identified damping ratio (nan if the estimator has no response)");
    t.add_column("rel_error", "|D - zeta| / zeta");
    for (auto& block : rows)
        for (auto& r : block) t.add_row(std::move(r));
    ctx.out.csv("convergence.csv", t, "damping error versus sensor count for every estimator");
}

BackboneReference epmc_reference(const Context& ctx, const HbmProblem& problem) {
    BackboneReference ref;
    ctx.out.timed("epmc", [&] { ref = continue_backbone(problem); });
    ctx.out.csv("backbone_epmc.csv", backbone_table(ref, problem, plot_axis(ctx.config)),
                "EPMC reference backbone");
    if (ref.points.empty()) fail(ErrorCode::NoConvergence, "EPMC continuation produced no points: " + ref.message);
    return ref;
}

void run_backbone_epmc(const Context& ctx) {
    const HbmProblem problem = build_problem(ctx.config);
    const auto ref = epmc_reference(ctx, problem);
    if (!ref.complete) fail(ErrorCode::NoConvergence, "EPMC continuation stopped early: " + ref.message);
}

RigRun backbone_test(const Context& ctx, const ModalBeamModel& model) {
    const auto& c = ctx.config;
    RigRun run;
    ctx.out.timed("virtual_test", [&] {
        run = run_backbone_test(model, build_pll(c, model), build_schedule(c), sensor_positions(c), rig_settings(c, 0));
    });
    ctx.out.csv("test_record.csv", test_record_table(run.record), "phase-resonant test record (spectra per level)");
    write_traces(ctx, run, "backbone");
    return run;
}

void run_backbone_virtual(const Context& ctx) {
    const auto& c = ctx.config;
    const HbmProblem problem = build_problem(c);
    const auto ref = epmc_reference(ctx, problem);
    const RigRun run = backbone_test(ctx, problem.model);

    std::vector<IdentifiedBackbone> ids;
    ctx.out.timed("identification", [&] { ids = identify_all(ctx, run.record, problem.model); });
    write_identified(ctx, ids);

    // EPMC points at the plot amplitude of each identified point.
    const AmplitudeAxis axis = plot_axis(c);
    std::vector<double> amps;
    for (const auto& bb : ids)
        for (const auto& p : bb.points) amps.push_back(p.amp_plot);
    std::sort(amps.begin(), amps.end());
    amps.erase(std::unique(amps.begin(), amps.end()), amps.end());
    std::vector<std::pair<double, double>> matched(amps.size(), {kNan, kNan});
    ctx.out.timed("matching", [&] {
        parallel_for(static_cast<int>(amps.size()), ctx.threads, [&](int k) {
            try {
                const auto p = backbone_point_at_deflection(problem, ref, axis.x, amps[static_cast<std::size_t>(k)]);
                matched[static_cast<std::size_t>(k)] = {p.omega, p.D};
            } catch (const Error& e) {
                if (e.code() != ErrorCode::OutOfRange && e.code() != ErrorCode::NoConvergence) throw;
            }
        });
    });

    CsvTable t;
    t.comments.push_back("table=comparison");
    t.add_column("sensor_set", "sensor set name");
    t.add_column("method", "estimator");
    t.add_column("level", "base displacement level [m]");
    t.add_column("amp_plot", "plot amplitude used to match the EPMC reference");
    t.add_column("omega", "identified modal frequency [rad/s]");
    t.add_column("omega_epmc", "EPMC modal frequency at the same plot amplitude");
    t.add_column("omega_rel_error", "relative frequency deviation");
    t.add_column("D", "identified damping ratio");
    t.add_column("D_epmc", "EPMC damping ratio at the same plot amplitude");
    t.add_column("D_rel_error", "relative damping deviation");
    for (const auto& bb : ids)
        for (const auto& p : bb.points) {
            const auto k = static_cast<std::size_t>(std::lower_bound(amps.begin(), amps.end(), p.amp_plot) - amps.begin());
            const auto [w, D] = matched[k];
            t.add_row({bb.sensor_set, to_string(bb.method), num(p.level), num(p.amp_plot / axis.scale), num(p.omega), num(w),
                       num(rel_error(p.omega, w)), num(p.D), num(D), num(rel_error(p.D, D))});
        }
    ctx.out.csv("comparison.csv", t, "identified backbones against EPMC at matched plot amplitude");
}

void run_identify(const Context& ctx) {
    const auto& c = ctx.config;
    const TestRecord record = test_record_from_table(read_csv(c.identification.record));
    const ModalBeamModel model = build_model(c.beam);
    for (const auto& set : c.sensors.sets)
        for (int i : set.sensors)
            if (i > static_cast<int>(record.sensor_positions.size()))
                fail(ErrorCode::Schema, "sensor set " + set.name + " refers to a channel missing from the record");
    std::vector<IdentifiedBackbone> ids;
    ctx.out.timed("identification", [&] { ids = identify_all(ctx, record, model); });
    write_identified(ctx, ids);
}

AmplitudeControl amplitude_control(const ExperimentConfig& c) {
    return {c.freqresp.amplitude_Kp, c.freqresp.amplitude_Ki, c.freqresp.saturation};
}

std::vector<double> phases_rad(const ExperimentConfig& c) {
    std::vector<double> out;
    for (double p : c.freqresp.phases_deg) out.push_back(p * kPi / 180.0);
    return out;
}

/// Constant-level rig tests, one branch per level.
std::vector<RigRun> frequency_tests(const Context& ctx, const ModalBeamModel& model) {
    const auto& c = ctx.config;
    const auto& f = c.freqresp;
    const PllConfig pll = build_pll(c, model);
    std::vector<RigRun> runs(f.levels.size());
    ctx.out.timed("frequency_tests", [&] {
        parallel_for(static_cast<int>(f.levels.size()), ctx.threads, [&](int k) {
            const auto i = static_cast<std::size_t>(k);
            runs[i] = run_frequency_response_test(model, pll, f.levels[i], phases_rad(c), f.wait_periods, f.hold_periods,
                                                  sensor_positions(c), rig_settings(c, k + 1), amplitude_control(c));
        });
    });
    const double scale = amplitude_scale(c);
    CsvTable t;
    t.comments.push_back("table=frequency-response-test");
    t.add_column("level", "base velocity level [m/s]");
    t.add_column("target_phase", "PLL target phase [rad]");
    t.add_column("Omega", "locked excitation frequency [rad/s]");
    t.add_column("locked", "phase lock reached during the hold");
    t.add_column("saturated", "amplitude controller hit its limit");
    t.add_column("base_velocity", "achieved base velocity amplitude [m/s]");
    t.add_column("amp_plot", "plot amplitude at the plotting sensor");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        ctx.out.csv("freqresp_level" + std::to_string(i + 1) + ".csv", test_record_table(runs[i].record),
                    "frequency-response test record at level " + num(f.levels[i]));
        write_traces(ctx, runs[i], "frf_level" + std::to_string(i + 1));
        const int plot = c.sensors.plot - 1;
        for (const auto& l : runs[i].record.levels)
            t.add_row({num(l.level), num(l.target_phase), num(l.Omega), l.locked ? "1" : "0",
                       l.amplitude_saturated ? "1" : "0", num(l.base_velocity),
                       num(std::abs(l.sensors.at(plot, 1)) / scale)});
    }
    ctx.out.csv("frf_rig.csv", t, "constant-level frequency responses from the virtual rig");
    return runs;
}

void run_freqresp(const Context& ctx) { frequency_tests(ctx, build_model(ctx.config.beam)); }

void run_rom_predict(const Context& ctx) {
    const auto& c = ctx.config;
    const HbmProblem problem = build_problem(c);
    const ModalBeamModel& model = problem.model;

    IdentifiedBackbone bb;
    if (!c.rom.backbone.empty()) {
        bb = identified_from_table(read_csv(c.rom.backbone));
    } else {
        const RigRun run = backbone_test(ctx, model);
        const SensorSet& set = find_set(c, c.rom.sensor_set);
        ctx.out.timed("identification", [&] { bb = identify_backbone(run.record, model, setup_for(c, set, c.rom.method)); });
        ctx.out.csv(identified_name(bb), identified_table(bb, amplitude_scale(c)), "identified backbone used by the ROM");
    }
    const TableInterpolant table(table_from_backbone(bb));
    const double w_lin = table(table.table().a_min()).omega;

    // Row of the plotting sensor inside the identified sensor set.
    int plot_row = -1;
    const auto xs = sensor_positions(c);
    const double x_plot = xs[static_cast<std::size_t>(c.sensors.plot - 1)];
    for (std::size_t i = 0; i < bb.sensor_positions.size(); ++i)
        if (std::abs(bb.sensor_positions[i] - x_plot) <= 1e-12 * c.beam.beam.L) plot_row = static_cast<int>(i);

    const auto& levels = c.freqresp.levels;
    std::vector<ForcedResponse> curves(levels.size());
    ctx.out.timed("rom_frf", [&] {
        parallel_for(static_cast<int>(levels.size()), ctx.threads, [&](int k) {
            const auto i = static_cast<std::size_t>(k);
            ForcedResponseOptions opts;
            opts.samples = c.rom.samples;
            curves[i] = solve_forced_response(table, {levels[i], LevelKind::BaseVelocity}, c.rom.omega_min_ratio * w_lin,
                                              c.rom.omega_max_ratio * w_lin, opts);
        });
    });
    for (std::size_t i = 0; i < curves.size(); ++i)
        ctx.out.csv("frf_rom_level" + std::to_string(i + 1) + ".csv", frf_table(curves[i], table, plot_row, amplitude_scale(c)),
                    "ROM frequency response at base velocity " + num(levels[i]));

    // Peaks against the identified and the EPMC backbone.
    const auto ref = epmc_reference(ctx, problem);
    CsvTable peaks;
    peaks.comments.push_back("table=rom-peaks");
    peaks.add_column("level", "base velocity level [m/s]");
    peaks.add_column("peak_found", "the response maximum lies inside the table range");
    peaks.add_column("a_peak", "modal amplitude at the maximum");
    peaks.add_column("Omega_peak", "frequency at the maximum [rad/s]");
    peaks.add_column("omega_identified", "identified backbone frequency at a_peak");
    peaks.add_column("omega_epmc", "EPMC backbone frequency at a_peak");
    peaks.add_column("rel_error_identified", "peak frequency deviation from the identified backbone");
    peaks.add_column("rel_error_epmc", "peak frequency deviation from the EPMC backbone");
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const auto& fr = curves[i];
        double w_id = kNan, w_ref = kNan;
        if (fr.peak_found) {
            w_id = table(fr.a_peak).omega;
            if (fr.a_peak >= ref.points.front().a && fr.a_peak <= ref.points.back().a) {
                const auto near = std::min_element(ref.points.begin(), ref.points.end(), [&](const auto& p, const auto& q) {
                    return std::abs(std::log(p.a / fr.a_peak)) < std::abs(std::log(q.a / fr.a_peak));
                });
                w_ref = solve_backbone_point(problem, fr.a_peak, *near).omega;
            }
        }
        peaks.add_row({num(levels[i]), fr.peak_found ? "1" : "0", num(fr.peak_found ? fr.a_peak : kNan),
                       num(fr.peak_found ? fr.Omega_peak : kNan), num(w_id), num(w_ref),
                       num(rel_error(fr.Omega_peak, w_id)), num(rel_error(fr.Omega_peak, w_ref))});
    }
    ctx.out.csv("rom_peaks.csv", peaks, "ROM response maxima against the backbones");

    if (!c.rom.validate) return;
    const auto runs = frequency_tests(ctx, model);
    const SensorSet* set = nullptr;
    for (const auto& s : c.sensors.sets)
        if (s.name == bb.sensor_set) set = &s;
    if (!set) fail(ErrorCode::Schema, "sensor set '" + bb.sensor_set + "' of the backbone is not configured");
    IdentificationSetup setup = setup_for(c, *set, bb.method);
    setup.locked_only = false;

    CsvTable t;
    t.comments.push_back("table=rom-validation");
    t.add_column("level", "base velocity level [m/s]");
    t.add_column("target_phase", "PLL target phase [rad]");
    t.add_column("locked", "rig reached phase lock");
    t.add_column("theta", "identified modal phase at the rig point [rad]");
    t.add_column("Omega_rig", "rig frequency [rad/s]");
    t.add_column("a_rig", "identified modal amplitude at the rig point");
    t.add_column("Omega_rom", "ROM frequency at the same modal phase");
    t.add_column("a_rom", "ROM modal amplitude at the same modal phase");
    t.add_column("stability", "ROM slow-flow stability");
    t.add_column("a_rel_error", "|a_rom - a_rig| / a_rig");
    t.add_column("Omega_rel_error", "|Omega_rom - Omega_rig| / Omega_rig");
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto id = identify_backbone(runs[i].record, model, setup);
        const BaseLevel level{levels[i], LevelKind::BaseVelocity};
        for (std::size_t k = 0; k < id.points.size(); ++k) {
            const auto& rig = runs[i].record.levels[k];
            const auto& p = id.points[k];
            double w = kNan, a = kNan;
            std::string stab = "none";
            try {
                const auto r = response_at_phase(table, level, p.theta);
                w = r.Omega;
                a = r.a;
                stab = to_string(r.stability);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoResponse && e.code() != ErrorCode::OutOfRange) throw;
            }
            t.add_row({num(levels[i]), num(rig.target_phase), rig.locked ? "1" : "0", num(p.theta), num(rig.Omega), num(p.a),
                       num(w), num(a), stab, num(rel_error(a, p.a)), num(rel_error(w, rig.Omega))});
        }
    }
    ctx.out.csv("rom_validation.csv", t, "ROM against constant-level rig tests at equal modal phase");
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, const std::string& out_dir, int threads) {
    config.validate();
    RunManifest m;
    m.experiment = to_string(config.experiment);
    m.config_hash = config_hash(config);
    m.seed = config.seed;
    m.versions = {{"nlmodal", NLMODAL_VERSION},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"compiler", __VERSION__}};
    fs::create_directories(out_dir);
    Outputs out(out_dir, m.config_hash, m);
    const Context ctx{config, out, std::max(1, threads)};
    try {
        out.text("config.yaml", serialize_config(config), "canonical experiment configuration");
        out.timed("total", [&] {
            switch (config.experiment) {
                case Experiment::Convergence: run_convergence(ctx); break;
                case Experiment::BackboneEpmc: run_backbone_epmc(ctx); break;
                case Experiment::BackboneVirtual: run_backbone_virtual(ctx); break;
                case Experiment::Identify: run_identify(ctx); break;
                case Experiment::FreqResp: run_freqresp(ctx); break;
                case Experiment::RomPredict: run_rom_predict(ctx); break;
            }
        });
    } catch (const Error& e) {
        m.status = "failed";
        m.error_code = to_string(e.code());
        m.error_message = m.experiment + ": " + e.what();
    } catch (const std::exception& e) {
        m.status = "failed";
        m.error_code = "internal";
        m.error_message = m.experiment + ": " + e.what();
    }
    std::ofstream os(fs::path(out_dir) / "manifest.json", std::ios::binary);
    os << m.to_json();
    return m;
}

// ---------------------------------------------------------------------------------------

std::map<std::string, double> parse_tolerances(const std::string& text) {
    std::map<std::string, double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::Schema, "tolerance '" + item + "' needs the form column=value");
        try {
            out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
        } catch (const std::exception&) {
            fail(ErrorCode::Schema, "tolerance '" + item + "' is not a number");
        }
    }
    return out;
}

namespace {

bool is_numeric_column(const CsvTable& t, int col) {
    for (const auto& r : t.rows) {
        const auto& cell = r[static_cast<std::size_t>(col)];
        char* end = nullptr;
        std::strtod(cell.c_str(), &end);
        if (cell.empty() || *end != '\0') return false;
    }
    return true;
}

double cell_value(const CsvTable& t, std::size_t row, int col) {
    return std::strtod(t.rows[row][static_cast<std::size_t>(col)].c_str(), nullptr);
}

void accumulate(ColumnReport& r, double cand, double ref, long long row) {
    double e;
    if (std::isnan(cand) && std::isnan(ref)) e = 0.0;
    else if (cand == ref) e = 0.0;
    else if (ref == 0.0 || !std::isfinite(ref) || !std::isfinite(cand)) e = std::numeric_limits<double>::infinity();
    else e = std::abs(cand - ref) / std::abs(ref);
    if (r.worst_row < 0 || e > r.max_rel_error) {
        r.max_rel_error = e;
        r.worst_row = row;
    }
}

}  // namespace

CompareReport compare_tables(const CsvTable& reference, const CsvTable& candidate, const CompareSpec& spec) {
    CompareReport report;
    std::vector<std::string> cols;
    if (!spec.tolerances.empty()) {
        for (const auto& [name, tol] : spec.tolerances) cols.push_back(name);
    } else {
        if (spec.key.empty() && reference.columns != candidate.columns)
            fail(ErrorCode::Schema, "column layouts differ");
        for (const auto& name : candidate.columns)
            if (name != spec.key && reference.has_column(name)) cols.push_back(name);
    }
    for (const auto& name : cols) {
        if (!reference.has_column(name)) fail(ErrorCode::Schema, "reference lacks column '" + name + "'");
        if (!candidate.has_column(name)) fail(ErrorCode::Schema, "candidate lacks column '" + name + "'");
    }
    auto tolerance = [&](const std::string& name) {
        const auto it = spec.tolerances.find(name);
        return it == spec.tolerances.end() ? spec.default_tolerance : it->second;
    };

    if (spec.key.empty()) {
        if (reference.rows.size() != candidate.rows.size()) fail(ErrorCode::Schema, "row counts differ");
        for (const auto& name : cols) {
            ColumnReport r{name, 0.0, -1, tolerance(name), true};
            const int ci = candidate.column_index(name), ri = reference.column_index(name);
            const bool numeric = is_numeric_column(candidate, ci) && is_numeric_column(reference, ri);
            for (std::size_t k = 0; k < candidate.rows.size(); ++k) {
                if (numeric) {
                    accumulate(r, cell_value(candidate, k, ci), cell_value(reference, k, ri), static_cast<long long>(k));
                } else if (candidate.rows[k][static_cast<std::size_t>(ci)] != reference.rows[k][static_cast<std::size_t>(ri)]) {
                    r.max_rel_error = std::numeric_limits<double>::infinity();
                    r.worst_row = static_cast<long long>(k);
                }
            }
            report.columns.push_back(r);
        }
        report.rows_compared = static_cast<long long>(candidate.rows.size());
    } else {
        if (!reference.has_column(spec.key) || !candidate.has_column(spec.key))
            fail(ErrorCode::Schema, "key column '" + spec.key + "' missing");
        std::vector<std::pair<double, std::size_t>> order;
        const int rk = reference.column_index(spec.key);
        for (std::size_t k = 0; k < reference.rows.size(); ++k) order.emplace_back(cell_value(reference, k, rk), k);
        std::sort(order.begin(), order.end());
        if (order.size() < 2) fail(ErrorCode::Schema, "reference needs at least two rows for interpolation");
        std::vector<ColumnReport> reps;
        for (const auto& name : cols) {
            const int ci = candidate.column_index(name), ri = reference.column_index(name);
            if (!is_numeric_column(candidate, ci) || !is_numeric_column(reference, ri))
                fail(ErrorCode::Schema, "column '" + name + "' is not numeric");
            reps.push_back({name, 0.0, -1, tolerance(name), true});
        }
        const int ck = candidate.column_index(spec.key);
        for (std::size_t k = 0; k < candidate.rows.size(); ++k) {
            const double x = cell_value(candidate, k, ck);
            if (!(x >= order.front().first && x <= order.back().first)) {
                ++report.rows_skipped;
                continue;
            }
            auto hi = std::upper_bound(order.begin(), order.end(), std::make_pair(x, std::size_t(-1)));
            if (hi == order.end()) --hi;
            const auto lo = hi - 1;
            const double t = hi->first > lo->first ? (x - lo->first) / (hi->first - lo->first) : 0.0;
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const int ri = reference.column_index(cols[c]);
                const double ref = (1.0 - t) * cell_value(reference, lo->second, ri) + t * cell_value(reference, hi->second, ri);
                accumulate(reps[c], cell_value(candidate, k, candidate.column_index(cols[c])), ref, static_cast<long long>(k));
            }
            ++report.rows_compared;
        }
        report.columns = std::move(reps);
        if (report.rows_compared == 0) fail(ErrorCode::Schema, "no candidate row lies inside the reference key range");
    }
    for (auto& r : report.columns) {
        r.pass = r.max_rel_error <= r.tolerance;
        report.pass = report.pass && r.pass;
    }
    return report;
}

std::string CompareReport::to_text() const {
    std::ostringstream os;
    os << "rows compared: " << rows_compared;
    if (rows_skipped) os << " (skipped " << rows_skipped << " outside the key range)";
    os << "\n";
    for (const auto& c : columns)
        os << (c.pass ? "ok   " : "FAIL ") << c.column << ": max rel error " << format_number(c.max_rel_error)
           << " (tolerance " << format_number(c.tolerance) << ", row " << c.worst_row << ")\n";
    os << (pass ? "PASS" : "FAIL") << "\n";
    return os.str();
}

}  // namespace nlmodal
