#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlmodal/beam_model.hpp"
#include "nlmodal/hbm_epmc.hpp"
#include "nlmodal/identification.hpp"
#include "nlmodal/virtual_rig.hpp"

namespace nlmodal {

enum class Experiment { Convergence, BackboneEpmc, BackboneVirtual, Identify, FreqResp, RomPredict };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);
const std::vector<std::pair<Experiment, std::string>>& experiment_catalog();

struct NonlinearityBlock {
    std::string type = "none";  ///< none | jenkins | bending-stretching
    double x_c_over_L = 0.5;
    double kt_over_EI_L3 = 0.0;
    double muN = 0.0;
    double E = 0.0;    ///< material for the derived rectangular section
    double rho = 0.0;
    double EA = 0.0;   ///< explicit axial stiffness (overrides E, rho)
};

struct BeamBlock {
    BeamConfig beam;
    NonlinearityBlock nonlinearity;
};

struct SolverBlock {
    int harmonics = 7;
    int time_samples = 128;
    int mode = 1;  ///< 1-based tracked mode
    ContinuationSettings continuation;
    double newton_tol = 1e-9;
    int max_newton = 25;
};

struct SensorSet {
    std::string name;
    std::vector<int> sensors;  ///< 1-based sensor numbers
};

struct SensorBlock {
    std::vector<double> positions_over_L;
    int reference = 1;
    int plot = 1;
    std::string amplitude_scale = "length";  ///< length | thickness
    std::vector<SensorSet> sets;
};

struct ControllerBlock {
    double omega_init = 0.0;  ///< 0: small-amplitude frequency of the tracked mode
    double Kp = 0.0;          ///< 0 with Ki = 0: gains from the design damping
    double Ki = 0.0;
    double Kd = 0.0;
    double design_damping = 0.01;
    double target_phase_deg = -90.0;
    double lp_cutoff_ratio = 0.01;
    double lock_tolerance_deg = 1.0;
    int lock_periods = 50;
    double integrator_limit = 0.8;
};

struct ScheduleBlock {
    std::vector<double> levels;
    int wait_periods = 2000;
    int hold_periods = 300;
    std::string direction = "forward";
};

struct IdentificationBlock {
    std::vector<Method> methods{Method::ModelBased, Method::ModelFree};
    Quadrature quadrature = Quadrature::Trapezoidal;
    std::string record;  ///< test record CSV for the identify experiment
};

struct FreqRespBlock {
    std::vector<double> levels;      ///< base velocity amplitudes [m/s]
    std::vector<double> phases_deg;
    int wait_periods = 2000;
    int hold_periods = 300;
    double amplitude_Kp = 0.2;
    double amplitude_Ki = 0.0;
    double saturation = 0.5;
};

struct ConvergenceCase {
    Boundary boundary = Boundary::PinnedPinned;
    std::vector<int> modes;  ///< 1-based
    int model_modes = 5;
};

struct ConvergenceBlock {
    std::vector<ConvergenceCase> cases;
    int max_sensors = 30;
};

struct RomBlock {
    std::string backbone;  ///< identified backbone CSV; empty runs the virtual test first
    std::string sensor_set;
    Method method = Method::ModelBased;
    double omega_min_ratio = 0.8;
    double omega_max_ratio = 1.5;
    int samples = 200;
    bool validate = true;
};

struct ExperimentConfig {
    Experiment experiment = Experiment::BackboneEpmc;
    std::uint64_t seed = 0;
    bool raw_traces = false;
    BeamBlock beam;
    SolverBlock solver;
    SensorBlock sensors;
    ControllerBlock controller;
    ScheduleBlock schedule;
    RigSettings rig;
    IdentificationBlock identification;
    FreqRespBlock freqresp;
    ConvergenceBlock convergence;
    RomBlock rom;

    /// Checks that the blocks needed by the chosen experiment are present and valid.
    void validate() const;
};

ExperimentConfig parse_config(const std::string& yaml_text);
ExperimentConfig load_config(const std::string& path);
/// Canonical YAML; parse_config(serialize_config(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& config);
std::string config_hash(const ExperimentConfig& config);

ModalBeamModel build_model(const BeamBlock& block);
HbmProblem build_problem(const ExperimentConfig& config);
std::vector<double> sensor_positions(const ExperimentConfig& config);
PllConfig build_pll(const ExperimentConfig& config, const ModalBeamModel& model);
/// Plot-amplitude normalization length (beam length or section thickness).
double amplitude_scale(const ExperimentConfig& config);

}  // namespace nlmodal
