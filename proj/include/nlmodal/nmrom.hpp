#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlmodal/hbm_epmc.hpp"
#include "nlmodal/identification.hpp"
#include "nlmodal/spectrum.hpp"
#include "nlmodal/virtual_rig.hpp"

namespace nlmodal {

/// Tabulated amplitude-dependent properties of one nonlinear mode.
struct ModalOscillatorTable {
    std::vector<double> a;
    std::vector<double> omega;
    std::vector<double> D;
    std::vector<double> force_factor;  ///< |v1^H M b| at each a
    Eigen::MatrixXcd v1;               ///< rows = a samples, cols = sensors (may be empty)

    void validate() const;
    double a_min() const { return a.front(); }
    double a_max() const { return a.back(); }
};

ModalOscillatorTable table_from_backbone(const IdentifiedBackbone& backbone);
/// Table from a reference backbone; shapes are modal coordinates, force factor |v1^T Gamma|.
ModalOscillatorTable table_from_reference(const BackboneReference& ref, const ModalBeamModel& model);

struct ModalProperties {
    double omega = 0.0;
    double D = 0.0;
    double force_factor = 0.0;
    Eigen::VectorXcd v1;
};

/// Shape-preserving cubic interpolation of omega, D and the force factor; linear for v1.
class TableInterpolant {
public:
    explicit TableInterpolant(ModalOscillatorTable table);

    const ModalOscillatorTable& table() const { return table_; }
    ModalProperties operator()(double a) const;
    bool contains(double a) const;

private:
    struct Impl;
    ModalOscillatorTable table_;
    std::shared_ptr<const Impl> impl_;
};

ModalProperties interpolate(const ModalOscillatorTable& table, double a);

enum class Stability { Stable, Unstable, Marginal };
std::string to_string(Stability s);

/// Excitation of the modal oscillator by base motion of fixed displacement or velocity
/// amplitude: modal force F = Omega^2 gamma q_b or Omega gamma V.
struct BaseLevel {
    double value = 0.0;
    LevelKind kind = LevelKind::BaseDisplacement;

    double force(double Omega, double force_factor) const;
};

struct ForcedResponsePoint {
    double Omega = 0.0;
    double a = 0.0;
    double theta = 0.0;  ///< phase of the modal response relative to the forcing
    Stability stability = Stability::Stable;
    double level = 0.0;
};

struct ForcedResponse {
    std::vector<ForcedResponsePoint> points;  ///< ordered along the curve
    bool truncated = false;                  ///< curve leaves the table amplitude range
    bool peak_found = false;
    double a_peak = 0.0;
    double Omega_peak = 0.0;
};

struct ForcedResponseOptions {
    int samples = 200;  ///< amplitude samples per branch
};

/// Complete (multi-valued) response curve parameterized by the modal amplitude.
ForcedResponse solve_forced_response(const TableInterpolant& table, const BaseLevel& level,
                                     double Omega_min, double Omega_max,
                                     const ForcedResponseOptions& options = {});

/// Averaged slow flow in (a, theta) at fixed Omega.
Eigen::Vector2d slow_flow(const TableInterpolant& table, const BaseLevel& level, double Omega,
                          double a, double theta);

/// Residual |(omega^2 - Omega^2 + 2 i D omega Omega) a - F exp(-i theta)| / (omega^2 a).
double forced_residual(const TableInterpolant& table, const BaseLevel& level,
                       const ForcedResponsePoint& p);

/// Fixed-point stability from finite-difference slow-flow Jacobian eigenvalues.
Stability classify_stability(const ForcedResponsePoint& point, const TableInterpolant& table,
                             const BaseLevel& level);

/// Response at a prescribed modal phase theta in (-pi, 0); smallest amplitude root.
ForcedResponsePoint response_at_phase(const TableInterpolant& table, const BaseLevel& level,
                                      double theta);

}  // namespace nlmodal
