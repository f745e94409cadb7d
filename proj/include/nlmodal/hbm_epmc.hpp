#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlmodal/beam_model.hpp"
#include "nlmodal/spectrum.hpp"

namespace nlmodal {

/// Amplitude range and step control, steps measured in log10(a).
struct ContinuationSettings {
    double a_start = 1e-6;
    double a_end = 1e-3;
    double initial_step = 0.05;
    double min_step = 1e-4;
    double max_step = 0.25;
};

struct HbmProblem {
    ModalBeamModel model;
    int H = 7;
    int Ntime = 128;
    int mode = 0;  ///< index of the tracked nonlinear mode
    ContinuationSettings continuation;
    double newton_tol = 1e-9;
    int max_newton = 25;

    void validate() const;
};

/// One point of an amplitude-dependent backbone.
struct BackbonePoint {
    double a = 0.0;
    double omega = 0.0;
    double D = 0.0;
    /// (H+1) x nmod Fourier coefficients of the mass-normalized deflection in modal
    /// coordinates (q_h = a exp(i theta) v_h).
    Eigen::MatrixXcd vhat;
    std::optional<cdouble> qb_hat;
};

struct PointDiagnostics {
    double residual_norm = 0.0;
    int iterations = 0;
};

struct BackboneReference {
    std::vector<BackbonePoint> points;
    std::vector<PointDiagnostics> diagnostics;
    bool complete = false;
    std::string message;
};

/// Alternating frequency-time evaluation of the nonlinear modal forces.
/// Coefficients use the stacked real layout: one (2H+1) block per modal coordinate.
class AftEvaluator {
public:
    AftEvaluator(const ModalBeamModel& model, int H, int N);

    struct Result {
        Eigen::VectorXd force;     ///< stacked real force coefficients
        Eigen::MatrixXd jacobian;  ///< d force / d coefficients (empty if not requested)
        int periods = 0;           ///< periods marched to periodize hysteresis
    };

    Result evaluate(const Eigen::VectorXd& coeffs, bool with_jacobian) const;

    /// Time samples of the contact force for a Jenkins model (diagnostics).
    Eigen::VectorXd jenkins_force_samples(const Eigen::VectorXd& coeffs) const;

    int H() const { return tf_.H(); }
    int N() const { return tf_.N(); }

private:
    Result jenkins(const Eigen::VectorXd& coeffs, bool with_jacobian,
                   Eigen::VectorXd* samples) const;
    Result stretching(const Eigen::VectorXd& coeffs, bool with_jacobian) const;

    const ModalBeamModel* model_;
    HarmonicTransform tf_;
};

inline constexpr int kMaxHysteresisPeriods = 20;

/// Spectrum of the modal nonlinear force for modal coordinates `eta` (channel = mode).
Spectrum aft_force(const Spectrum& eta, const HbmProblem& problem);

/// Extended periodic motion residual in scaled unknowns.
///
/// Unknowns: [xi (stacked real harmonics of eta / a), Omega / omega_ref, D], where
/// omega_ref is the linear frequency of the tracked mode. The dynamic residual is
/// divided by omega_ref^2 and closed by ||xi_1|| = 1 and a zero imaginary part of the
/// anchor coordinate's fundamental.
class EpmcSystem {
public:
    EpmcSystem(const HbmProblem& problem, int anchor);

    int size() const;
    double omega_ref() const { return omega_ref_; }
    int anchor() const { return anchor_; }

    Eigen::VectorXd residual(const Eigen::VectorXd& y, double a) const;
    Eigen::VectorXd residual(const Eigen::VectorXd& y, double a, Eigen::MatrixXd* jac) const;

    Eigen::VectorXd initial_guess() const;
    BackbonePoint to_point(const Eigen::VectorXd& y, double a) const;
    Eigen::VectorXd from_point(const BackbonePoint& p) const;

private:
    const HbmProblem* problem_;
    AftEvaluator aft_;
    int anchor_;
    double omega_ref_;
};

Eigen::VectorXd epmc_residual(const Eigen::VectorXd& unknowns, const HbmProblem& problem,
                              double a);

/// Dominant modal coordinate of the small-amplitude mode, used as phase anchor.
int default_anchor(const HbmProblem& problem);

BackboneReference continue_backbone(const HbmProblem& problem);

/// Converged point at amplitude a, with Newton started from a nearby point.
BackbonePoint solve_backbone_point(const HbmProblem& problem, double a, const BackbonePoint& near);

/// Point whose fundamental deflection magnitude at x equals `target`, located inside the
/// amplitude range covered by `ref`.
BackbonePoint backbone_point_at_deflection(const HbmProblem& problem, const BackboneReference& ref,
                                           double x, double target);

/// Period-averaged power dissipated by the fundamental harmonic at a converged point,
/// divided by omega^3 a^2 (equals D when the harmonic balance holds).
double fundamental_power_damping(const HbmProblem& problem, const BackbonePoint& p);

/// Fundamental harmonic of the physical deflection at x (complex, theta = 0 gauge).
cdouble deflection_fundamental(const ModalBeamModel& model, const BackbonePoint& p, double x);

}  // namespace nlmodal
