#include "nlmodal/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "nlmodal/csv.hpp"
#include "nlmodal/error.hpp"

namespace nlmodal {

const std::vector<std::pair<Experiment, std::string>>& experiment_catalog() {
    static const std::vector<std::pair<Experiment, std::string>> cat{
        {Experiment::Convergence, "convergence"},
        {Experiment::BackboneEpmc, "backbone-epmc"},
        {Experiment::BackboneVirtual, "backbone-virtual"},
        {Experiment::Identify, "identify"},
        {Experiment::FreqResp, "freqresp"},
        {Experiment::RomPredict, "rom-predict"},
    };
    return cat;
}

std::string to_string(Experiment e) {
    for (const auto& [k, name] : experiment_catalog())
        if (k == e) return name;
    return "?";
}

Experiment experiment_from_string(const std::string& s) {
    for (const auto& [k, name] : experiment_catalog())
        if (name == s) return k;
    fail(ErrorCode::Schema, "unknown experiment '" + s + "'");
}

namespace {

// Rejects keys outside the allowed set so that typos surface early.
void check_keys(const YAML::Node& node, const std::string& where, std::set<std::string> allowed) {
    if (!node.IsMap()) fail(ErrorCode::Schema, where + " must be a mapping");
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.count(key)) fail(ErrorCode::Schema, "unknown key '" + key + "' in " + where);
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out) {
    if (const auto v = node[key]) {
        try {
            out = v.as<T>();
        } catch (const YAML::Exception&) {
            fail(ErrorCode::Schema, std::string("bad value for '") + key + "'");
        }
    }
}

std::vector<double> read_levels(const YAML::Node& node, const char* list_key, const char* log_key) {
    std::vector<double> out;
    if (const auto v = node[list_key]) out = v.as<std::vector<double>>();
    if (const auto g = node[log_key]) {
        check_keys(g, log_key, {"first", "last", "count"});
        const double first = g["first"].as<double>(), last = g["last"].as<double>();
        const int count = g["count"].as<int>();
        if (count < 1) fail(ErrorCode::Schema, std::string(log_key) + ": count must be positive");
        for (int k = 0; k < count; ++k) {
            const double t = count == 1 ? 0.0 : static_cast<double>(k) / (count - 1);
            out.push_back(first * std::pow(last / first, t));
        }
    }
    return out;
}

std::vector<double> read_linear(const YAML::Node& node, const char* list_key, const char* lin_key) {
    std::vector<double> out;
    if (const auto v = node[list_key]) out = v.as<std::vector<double>>();
    if (const auto g = node[lin_key]) {
        check_keys(g, lin_key, {"first", "last", "count"});
        const double first = g["first"].as<double>(), last = g["last"].as<double>();
        const int count = g["count"].as<int>();
        if (count < 1) fail(ErrorCode::Schema, std::string(lin_key) + ": count must be positive");
        for (int k = 0; k < count; ++k)
            out.push_back(count == 1 ? first : first + (last - first) * k / (count - 1));
    }
    return out;
}

}  // namespace

ExperimentConfig parse_config(const std::string& yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(yaml_text);
    } catch (const YAML::Exception& e) {
        fail(ErrorCode::Schema, std::string("config is not valid YAML: ") + e.what());
    }
    check_keys(root, "config", {"experiment", "seed", "raw_traces", "beam", "solver", "sensors", "controller",
                                "schedule", "rig", "identification", "freqresp", "convergence", "rom"});
    ExperimentConfig c;
    if (!root["experiment"]) fail(ErrorCode::Schema, "config needs an 'experiment' key");
    c.experiment = experiment_from_string(root["experiment"].as<std::string>());
    read(root, "seed", c.seed);
    read(root, "raw_traces", c.raw_traces);

    if (const auto b = root["beam"]) {
        check_keys(b, "beam", {"boundary", "EI", "rhoA", "L", "modes", "zeta", "nonlinearity"});
        auto& beam = c.beam.beam;
        if (b["boundary"]) beam.boundary = boundary_from_string(b["boundary"].as<std::string>());
        read(b, "EI", beam.EI);
        read(b, "rhoA", beam.rhoA);
        read(b, "L", beam.L);
        read(b, "modes", beam.nmod);
        if (const auto z = b["zeta"]) {
            if (z.IsSequence()) beam.zeta = z.as<std::vector<double>>();
            else beam.zeta.assign(static_cast<std::size_t>(std::max(beam.nmod, 1)), z.as<double>());
        }
        if (beam.zeta.empty()) beam.zeta.assign(static_cast<std::size_t>(std::max(beam.nmod, 1)), 0.0);
        if (const auto n = b["nonlinearity"]) {
            check_keys(n, "beam.nonlinearity", {"type", "x_c_over_L", "kt_over_EI_L3", "muN", "E", "rho", "EA"});
            auto& nl = c.beam.nonlinearity;
            read(n, "type", nl.type);
            read(n, "x_c_over_L", nl.x_c_over_L);
            read(n, "kt_over_EI_L3", nl.kt_over_EI_L3);
            read(n, "muN", nl.muN);
            read(n, "E", nl.E);
            read(n, "rho", nl.rho);
            read(n, "EA", nl.EA);
        }
    }
    if (const auto s = root["solver"]) {
        check_keys(s, "solver", {"harmonics", "time_samples", "mode", "a_start", "a_end", "initial_step",
                                 "min_step", "max_step", "newton_tol", "max_newton"});
        read(s, "harmonics", c.solver.harmonics);
        read(s, "time_samples", c.solver.time_samples);
        read(s, "mode", c.solver.mode);
        read(s, "a_start", c.solver.continuation.a_start);
        read(s, "a_end", c.solver.continuation.a_end);
        read(s, "initial_step", c.solver.continuation.initial_step);
        read(s, "min_step", c.solver.continuation.min_step);
        read(s, "max_step", c.solver.continuation.max_step);
        read(s, "newton_tol", c.solver.newton_tol);
        read(s, "max_newton", c.solver.max_newton);
    }
    if (const auto s = root["sensors"]) {
        check_keys(s, "sensors", {"positions_over_L", "reference", "plot", "amplitude_scale", "sets"});
        read(s, "positions_over_L", c.sensors.positions_over_L);
        read(s, "reference", c.sensors.reference);
        read(s, "plot", c.sensors.plot);
        read(s, "amplitude_scale", c.sensors.amplitude_scale);
        if (const auto sets = s["sets"]) {
            if (!sets.IsMap()) fail(ErrorCode::Schema, "sensors.sets must map names to sensor lists");
            for (const auto& kv : sets)
                c.sensors.sets.push_back({kv.first.as<std::string>(), kv.second.as<std::vector<int>>()});
        }
    }
    if (const auto k = root["controller"]) {
        check_keys(k, "controller", {"omega_init", "Kp", "Ki", "Kd", "design_damping", "target_phase_deg",
                                     "lp_cutoff_ratio", "lock_tolerance_deg", "lock_periods", "integrator_limit"});
        auto& p = c.controller;
        read(k, "omega_init", p.omega_init);
        read(k, "Kp", p.Kp);
        read(k, "Ki", p.Ki);
        read(k, "Kd", p.Kd);
        read(k, "design_damping", p.design_damping);
        read(k, "target_phase_deg", p.target_phase_deg);
        read(k, "lp_cutoff_ratio", p.lp_cutoff_ratio);
        read(k, "lock_tolerance_deg", p.lock_tolerance_deg);
        read(k, "lock_periods", p.lock_periods);
        read(k, "integrator_limit", p.integrator_limit);
    }
    if (const auto s = root["schedule"]) {
        check_keys(s, "schedule", {"levels", "levels_log", "wait_periods", "hold_periods", "direction"});
        c.schedule.levels = read_levels(s, "levels", "levels_log");
        read(s, "wait_periods", c.schedule.wait_periods);
        read(s, "hold_periods", c.schedule.hold_periods);
        read(s, "direction", c.schedule.direction);
    }
    if (const auto r = root["rig"]) {
        check_keys(r, "rig", {"steps_per_period", "harmonics", "noise_std"});
        read(r, "steps_per_period", c.rig.steps_per_period);
        read(r, "harmonics", c.rig.H);
        read(r, "noise_std", c.rig.noise_std);
    }
    if (const auto i = root["identification"]) {
        check_keys(i, "identification", {"methods", "quadrature", "record"});
        if (const auto m = i["methods"]) {
            c.identification.methods.clear();
            for (const auto& s : m.as<std::vector<std::string>>()) c.identification.methods.push_back(method_from_string(s));
        }
        if (i["quadrature"]) c.identification.quadrature = quadrature_from_string(i["quadrature"].as<std::string>());
        read(i, "record", c.identification.record);
    }
    if (const auto f = root["freqresp"]) {
        check_keys(f, "freqresp", {"levels", "phases_deg", "phases_deg_linear", "wait_periods", "hold_periods",
                                   "amplitude_Kp", "amplitude_Ki", "saturation"});
        c.freqresp.levels = f["levels"] ? f["levels"].as<std::vector<double>>() : std::vector<double>{};
        c.freqresp.phases_deg = read_linear(f, "phases_deg", "phases_deg_linear");
        read(f, "wait_periods", c.freqresp.wait_periods);
        read(f, "hold_periods", c.freqresp.hold_periods);
        read(f, "amplitude_Kp", c.freqresp.amplitude_Kp);
        read(f, "amplitude_Ki", c.freqresp.amplitude_Ki);
        read(f, "saturation", c.freqresp.saturation);
    }
    if (const auto v = root["convergence"]) {
        check_keys(v, "convergence", {"cases", "max_sensors"});
        read(v, "max_sensors", c.convergence.max_sensors);
        if (const auto cs = v["cases"]) {
            for (const auto& n : cs) {
                check_keys(n, "convergence.cases", {"boundary", "modes", "model_modes"});
                ConvergenceCase cc;
                cc.boundary = boundary_from_string(n["boundary"].as<std::string>());
                cc.modes = n["modes"].as<std::vector<int>>();
                read(n, "model_modes", cc.model_modes);
                c.convergence.cases.push_back(cc);
            }
        }
    }
    if (const auto r = root["rom"]) {
        check_keys(r, "rom", {"backbone", "sensor_set", "method", "omega_min_ratio", "omega_max_ratio",
                              "samples", "validate"});
        read(r, "backbone", c.rom.backbone);
        read(r, "sensor_set", c.rom.sensor_set);
        if (r["method"]) c.rom.method = method_from_string(r["method"].as<std::string>());
        read(r, "omega_min_ratio", c.rom.omega_min_ratio);
        read(r, "omega_max_ratio", c.rom.omega_max_ratio);
        read(r, "samples", c.rom.samples);
        read(r, "validate", c.rom.validate);
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) fail(ErrorCode::Io, "cannot read config " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    ExperimentConfig c = parse_config(ss.str());
    // Input files named in the config are relative to the config itself.
    const auto base = std::filesystem::path(path).parent_path();
    for (std::string* f : {&c.identification.record, &c.rom.backbone})
        if (!f->empty() && std::filesystem::path(*f).is_relative()) *f = (base / *f).lexically_normal().string();
    return c;
}

namespace {

struct Num {
    double v;
};
YAML::Emitter& operator<<(YAML::Emitter& e, Num n) { return e << format_number(n.v); }

YAML::Emitter& numbers(YAML::Emitter& e, const std::vector<double>& xs) {
    e << YAML::Flow << YAML::BeginSeq;
    for (double x : xs) e << Num{x};
    return e << YAML::EndSeq;
}

}  // namespace

std::string serialize_config(const ExperimentConfig& c) {
    YAML::Emitter e;
    e << YAML::BeginMap;
    e << YAML::Key << "experiment" << YAML::Value << to_string(c.experiment);
    e << YAML::Key << "seed" << YAML::Value << c.seed;
    e << YAML::Key << "raw_traces" << YAML::Value << c.raw_traces;

    const auto& b = c.beam.beam;
    e << YAML::Key << "beam" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "boundary" << YAML::Value << to_string(b.boundary);
    e << YAML::Key << "EI" << YAML::Value << Num{b.EI};
    e << YAML::Key << "rhoA" << YAML::Value << Num{b.rhoA};
    e << YAML::Key << "L" << YAML::Value << Num{b.L};
    e << YAML::Key << "modes" << YAML::Value << b.nmod;
    e << YAML::Key << "zeta" << YAML::Value;
    numbers(e, b.zeta);
    const auto& nl = c.beam.nonlinearity;
    e << YAML::Key << "nonlinearity" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "type" << YAML::Value << nl.type;
    e << YAML::Key << "x_c_over_L" << YAML::Value << Num{nl.x_c_over_L};
    e << YAML::Key << "kt_over_EI_L3" << YAML::Value << Num{nl.kt_over_EI_L3};
    e << YAML::Key << "muN" << YAML::Value << Num{nl.muN};
    e << YAML::Key << "E" << YAML::Value << Num{nl.E};
    e << YAML::Key << "rho" << YAML::Value << Num{nl.rho};
    e << YAML::Key << "EA" << YAML::Value << Num{nl.EA};
    e << YAML::EndMap << YAML::EndMap;

    const auto& s = c.solver;
    e << YAML::Key << "solver" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "harmonics" << YAML::Value << s.harmonics;
    e << YAML::Key << "time_samples" << YAML::Value << s.time_samples;
    e << YAML::Key << "mode" << YAML::Value << s.mode;
    e << YAML::Key << "a_start" << YAML::Value << Num{s.continuation.a_start};
    e << YAML::Key << "a_end" << YAML::Value << Num{s.continuation.a_end};
    e << YAML::Key << "initial_step" << YAML::Value << Num{s.continuation.initial_step};
    e << YAML::Key << "min_step" << YAML::Value << Num{s.continuation.min_step};
    e << YAML::Key << "max_step" << YAML::Value << Num{s.continuation.max_step};
    e << YAML::Key << "newton_tol" << YAML::Value << Num{s.newton_tol};
    e << YAML::Key << "max_newton" << YAML::Value << s.max_newton;
    e << YAML::EndMap;

    const auto& sn = c.sensors;
    e << YAML::Key << "sensors" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "positions_over_L" << YAML::Value;
    numbers(e, sn.positions_over_L);
    e << YAML::Key << "reference" << YAML::Value << sn.reference;
    e << YAML::Key << "plot" << YAML::Value << sn.plot;
    e << YAML::Key << "amplitude_scale" << YAML::Value << sn.amplitude_scale;
    e << YAML::Key << "sets" << YAML::Value << YAML::BeginMap;
    for (const auto& set : sn.sets) e << YAML::Key << set.name << YAML::Value << YAML::Flow << set.sensors;
    e << YAML::EndMap << YAML::EndMap;

    const auto& k = c.controller;
    e << YAML::Key << "controller" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "omega_init" << YAML::Value << Num{k.omega_init};
    e << YAML::Key << "Kp" << YAML::Value << Num{k.Kp};
    e << YAML::Key << "Ki" << YAML::Value << Num{k.Ki};
    e << YAML::Key << "Kd" << YAML::Value << Num{k.Kd};
    e << YAML::Key << "design_damping" << YAML::Value << Num{k.design_damping};
    e << YAML::Key << "target_phase_deg" << YAML::Value << Num{k.target_phase_deg};
    e << YAML::Key << "lp_cutoff_ratio" << YAML::Value << Num{k.lp_cutoff_ratio};
    e << YAML::Key << "lock_tolerance_deg" << YAML::Value << Num{k.lock_tolerance_deg};
    e << YAML::Key << "lock_periods" << YAML::Value << k.lock_periods;
    e << YAML::Key << "integrator_limit" << YAML::Value << Num{k.integrator_limit};
    e << YAML::EndMap;

    e << YAML::Key << "schedule" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "levels" << YAML::Value;
    numbers(e, c.schedule.levels);
    e << YAML::Key << "wait_periods" << YAML::Value << c.schedule.wait_periods;
    e << YAML::Key << "hold_periods" << YAML::Value << c.schedule.hold_periods;
    e << YAML::Key << "direction" << YAML::Value << c.schedule.direction;
    e << YAML::EndMap;

    e << YAML::Key << "rig" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "steps_per_period" << YAML::Value << c.rig.steps_per_period;
    e << YAML::Key << "harmonics" << YAML::Value << c.rig.H;
    e << YAML::Key << "noise_std" << YAML::Value << Num{c.rig.noise_std};
    e << YAML::EndMap;

    e << YAML::Key << "identification" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "methods" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (Method m : c.identification.methods) e << to_string(m);
    e << YAML::EndSeq;
    e << YAML::Key << "quadrature" << YAML::Value << to_string(c.identification.quadrature);
    e << YAML::Key << "record" << YAML::Value << c.identification.record;
    e << YAML::EndMap;

    const auto& f = c.freqresp;
    e << YAML::Key << "freqresp" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "levels" << YAML::Value;
    numbers(e, f.levels);
    e << YAML::Key << "phases_deg" << YAML::Value;
    numbers(e, f.phases_deg);
    e << YAML::Key << "wait_periods" << YAML::Value << f.wait_periods;
    e << YAML::Key << "hold_periods" << YAML::Value << f.hold_periods;
    e << YAML::Key << "amplitude_Kp" << YAML::Value << Num{f.amplitude_Kp};
    e << YAML::Key << "amplitude_Ki" << YAML::Value << Num{f.amplitude_Ki};
    e << YAML::Key << "saturation" << YAML::Value << Num{f.saturation};
    e << YAML::EndMap;

    e << YAML::Key << "convergence" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "cases" << YAML::Value << YAML::BeginSeq;
    for (const auto& cc : c.convergence.cases) {
        e << YAML::BeginMap;
        e << YAML::Key << "boundary" << YAML::Value << to_string(cc.boundary);
        e << YAML::Key << "modes" << YAML::Value << YAML::Flow << cc.modes;
        e << YAML::Key << "model_modes" << YAML::Value << cc.model_modes;
        e << YAML::EndMap;
    }
    e << YAML::EndSeq;
    e << YAML::Key << "max_sensors" << YAML::Value << c.convergence.max_sensors;
    e << YAML::EndMap;

    const auto& r = c.rom;
    e << YAML::Key << "rom" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "backbone" << YAML::Value << r.backbone;
    e << YAML::Key << "sensor_set" << YAML::Value << r.sensor_set;
    e << YAML::Key << "method" << YAML::Value << to_string(r.method);
    e << YAML::Key << "omega_min_ratio" << YAML::Value << Num{r.omega_min_ratio};
    e << YAML::Key << "omega_max_ratio" << YAML::Value << Num{r.omega_max_ratio};
    e << YAML::Key << "samples" << YAML::Value << r.samples;
    e << YAML::Key << "validate" << YAML::Value << r.validate;
    e << YAML::EndMap;

    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& config) { return fnv1a_hex(serialize_config(config)); }

void ExperimentConfig::validate() const {
    auto need = [](bool ok, const std::string& msg) {
        if (!ok) fail(ErrorCode::Schema, msg);
    };
    const Experiment e = experiment;
    const bool uses_beam = e != Experiment::Convergence;
    need(beam.beam.EI > 0 && beam.beam.rhoA > 0 && beam.beam.L > 0, "beam: EI, rhoA and L must be positive");
    if (uses_beam) {
        beam.beam.validate();
        const auto& t = beam.nonlinearity.type;
        need(t == "none" || t == "jenkins" || t == "bending-stretching", "beam.nonlinearity.type is unknown");
        need(solver.mode >= 1 && solver.mode <= beam.beam.nmod, "solver.mode outside the modal basis");
    }
    const bool uses_rig = e == Experiment::BackboneVirtual || e == Experiment::FreqResp ||
                          (e == Experiment::RomPredict && (rom.backbone.empty() || rom.validate));
    if (uses_rig || e == Experiment::Identify || e == Experiment::RomPredict) {
        need(!sensors.positions_over_L.empty(), "sensors.positions_over_L is required");
        const int n = static_cast<int>(sensors.positions_over_L.size());
        need(sensors.reference >= 1 && sensors.reference <= n, "sensors.reference out of range");
        need(sensors.plot >= 1 && sensors.plot <= n, "sensors.plot out of range");
        need(sensors.amplitude_scale == "length" || sensors.amplitude_scale == "thickness",
             "sensors.amplitude_scale must be length or thickness");
        for (const auto& s : sensors.sets) {
            need(!s.sensors.empty(), "sensor set '" + s.name + "' is empty");
            for (int i : s.sensors) need(i >= 1 && i <= n, "sensor set '" + s.name + "' refers to a missing sensor");
        }
    }
    if (uses_rig) {
        need(!sensors.sets.empty(), "sensors.sets is required");
        rig.validate();
        need(controller.lp_cutoff_ratio > 0 && controller.lp_cutoff_ratio < 1, "controller.lp_cutoff_ratio in (0, 1)");
    }
    if (e == Experiment::BackboneVirtual || (e == Experiment::RomPredict && rom.backbone.empty())) {
        LevelSchedule s{schedule.levels, schedule.wait_periods, schedule.hold_periods};
        try {
            s.validate();
        } catch (const Error& err) {
            fail(ErrorCode::Schema, std::string("schedule: ") + err.what());
        }
        need(schedule.direction == "forward" || schedule.direction == "forward-then-backward",
             "schedule.direction must be forward or forward-then-backward");
    }
    if (e == Experiment::FreqResp || e == Experiment::RomPredict) {
        need(!freqresp.levels.empty(), "freqresp.levels is required");
        for (double l : freqresp.levels) need(l > 0, "freqresp levels must be positive");
    }
    if (e == Experiment::FreqResp || (e == Experiment::RomPredict && rom.validate)) {
        need(!freqresp.phases_deg.empty(), "freqresp.phases_deg is required");
        for (double p : freqresp.phases_deg) need(p > -180.0 && p < 0.0, "freqresp phases must lie in (-180, 0)");
        need(freqresp.hold_periods >= 1 && freqresp.wait_periods >= 0, "freqresp: invalid durations");
    }
    if (e == Experiment::Identify) need(!identification.record.empty(), "identification.record is required");
    if (e == Experiment::Convergence) {
        need(!convergence.cases.empty(), "convergence.cases is required");
        need(convergence.max_sensors >= 1, "convergence.max_sensors must be positive");
        for (const auto& cc : convergence.cases) {
            need(!cc.modes.empty() && cc.model_modes >= 1 && cc.model_modes <= kMaxModes, "convergence case is invalid");
            for (int m : cc.modes) need(m >= 1 && m <= cc.model_modes, "convergence mode outside the model");
        }
    }
    if (e == Experiment::RomPredict) {
        need(rom.samples >= 10, "rom.samples must be at least 10");
        need(rom.omega_min_ratio > 0 && rom.omega_max_ratio > rom.omega_min_ratio, "rom frequency window invalid");
    }
    if (e == Experiment::BackboneEpmc || e == Experiment::BackboneVirtual || e == Experiment::RomPredict) {
        need(solver.continuation.a_start > 0 && solver.continuation.a_end > solver.continuation.a_start,
             "solver amplitude range invalid");
    }
}

ModalBeamModel build_model(const BeamBlock& block) {
    const auto& b = block.beam;
    const auto& n = block.nonlinearity;
    if (n.type == "none") return ModalBeamModel(b, std::monostate{});
    if (n.type == "jenkins") {
        Jenkins j{n.x_c_over_L * b.L, n.kt_over_EI_L3 * b.EI / (b.L * b.L * b.L), n.muN};
        return ModalBeamModel(b, j);
    }
    if (n.type == "bending-stretching") {
        double EA = n.EA;
        if (EA <= 0.0) EA = rectangular_section(b.EI, b.rhoA, n.E, n.rho).EA;
        return ModalBeamModel(b, BendingStretching{EA / (2.0 * b.L)});
    }
    fail(ErrorCode::Schema, "unknown nonlinearity '" + n.type + "'");
}

HbmProblem build_problem(const ExperimentConfig& c) {
    const auto& s = c.solver;
    HbmProblem p{build_model(c.beam), s.harmonics, s.time_samples, s.mode - 1, s.continuation, s.newton_tol,
                 s.max_newton};
    p.validate();
    return p;
}

std::vector<double> sensor_positions(const ExperimentConfig& c) {
    std::vector<double> xs;
    for (double r : c.sensors.positions_over_L) xs.push_back(r * c.beam.beam.L);
    return xs;
}

PllConfig build_pll(const ExperimentConfig& c, const ModalBeamModel& model) {
    const auto& k = c.controller;
    double w = k.omega_init;
    if (w <= 0.0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.tangent_stiffness_at_rest());
        w = std::sqrt(es.eigenvalues()(c.solver.mode - 1));
    }
    PllConfig pll = suggest_pll(w, k.design_damping, k.lp_cutoff_ratio);
    if (k.Kp > 0.0 || k.Ki > 0.0) {
        pll.Kp = k.Kp;
        pll.Ki = k.Ki;
    }
    pll.Kd = k.Kd;
    constexpr double deg = 3.14159265358979323846 / 180.0;
    pll.target_phase = k.target_phase_deg * deg;
    pll.lock_tolerance = k.lock_tolerance_deg * deg;
    pll.lock_periods = k.lock_periods;
    pll.integrator_limit = k.integrator_limit;
    pll.reference_channel = c.sensors.reference - 1;
    pll.validate();
    return pll;
}

double amplitude_scale(const ExperimentConfig& c) {
    const auto& b = c.beam.beam;
    if (c.sensors.amplitude_scale == "thickness") {
        const auto& n = c.beam.nonlinearity;
        if (n.E <= 0.0 || n.rho <= 0.0) fail(ErrorCode::Schema, "thickness axis needs beam.nonlinearity E and rho");
        return rectangular_section(b.EI, b.rhoA, n.E, n.rho).thickness;
    }
    return b.L;
}

}  // namespace nlmodal
