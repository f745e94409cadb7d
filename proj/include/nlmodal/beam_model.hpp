#pragma once

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace nlmodal {

enum class Boundary { Cantilever, PinnedPinned, ClampedClamped };

std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

/// Uniform Euler-Bernoulli beam: EI [N m^2], rhoA [kg/m], L [m].
struct BeamConfig {
    Boundary boundary = Boundary::Cantilever;
    double EI = 1.0;
    double rhoA = 1.0;
    double L = 1.0;
    int nmod = 1;
    std::vector<double> zeta;  ///< per-mode linear modal damping ratio

    void validate() const;
};

/// Elastic dry friction: spring kt in series with a Coulomb slider of limit muN,
/// attached to ground at position x_c.
struct Jenkins {
    double x_c = 0.0;
    double kt = 1.0;
    double muN = 1.0;
};

/// Axial stretching of a beam with immovable ends. The modal inner product
/// matrix of the slopes is assembled by the model.
struct BendingStretching {
    double EA_over_2L = 0.0;
};

using NonlinearElement = std::variant<std::monostate, Jenkins, BendingStretching>;

/// Internal variable of a hysteretic element (Jenkins slider displacement).
struct HystereticState {
    double slider = 0.0;
};

/// Truncated, mass-normalized modal model of a base-excited beam.
class ModalBeamModel {
public:
    ModalBeamModel(BeamConfig config, NonlinearElement nl);

    const BeamConfig& config() const { return config_; }
    const NonlinearElement& nonlinearity() const { return nl_; }
    int nmod() const { return config_.nmod; }

    const Eigen::VectorXd& omega() const { return omega_; }
    const Eigen::VectorXd& gamma() const { return gamma_; }
    /// Dimensionless characteristic roots (lambda_j L).
    const Eigen::VectorXd& roots() const { return roots_; }
    Eigen::VectorXd zeta() const;

    double shape(int j, double x) const;
    double slope(int j, double x) const;
    /// All mode shapes at x.
    Eigen::VectorXd shapes_at(double x) const;
    /// nsens x nmod matrix of mode shapes at the given positions.
    Eigen::MatrixXd shape_matrix(const std::vector<double>& xs) const;

    /// Modal slope inner products K_jk = int phi_j' phi_k' dx (zero if unused).
    const Eigen::MatrixXd& stretching_matrix() const { return stretch_; }
    /// Shapes at the Jenkins attachment point (empty otherwise).
    const Eigen::VectorXd& contact_shapes() const { return contact_; }

    /// Linear stiffness of the model in the small-amplitude limit, including a stuck
    /// Jenkins spring.
    Eigen::MatrixXd tangent_stiffness_at_rest() const;

private:
    BeamConfig config_;
    NonlinearElement nl_;
    Eigen::VectorXd roots_;
    Eigen::VectorXd omega_;
    Eigen::VectorXd gamma_;
    Eigen::VectorXd sigma_;       // shape coefficient sigma_j
    Eigen::VectorXd one_minus_;   // 1 - sigma_j, evaluated without cancellation
    double norm_ = 1.0;
    Eigen::MatrixXd stretch_;
    Eigen::VectorXd contact_;
};

ModalBeamModel build_beam_model(const BeamConfig& config, const NonlinearElement& nl);

/// Dimensionless characteristic root of mode j (0-based) for the given boundary.
double characteristic_root(Boundary boundary, int j);

/// Largest supported mode count (root brackets stay well inside double range).
inline constexpr int kMaxModes = 60;

struct ModalForce {
    Eigen::VectorXd g;
    HystereticState state;
};

/// Jenkins return map: trial force from the stored slider, clipped to +-muN.
struct JenkinsUpdate {
    double force;
    double slider;
};
JenkinsUpdate jenkins_return_map(const Jenkins& el, double w, double slider);

/// Nonlinear modal force vector and updated hysteretic state.
ModalForce nonlinear_modal_force(const ModalBeamModel& model, const Eigen::VectorXd& eta,
                                 const Eigen::VectorXd& eta_dot, HystereticState state);

/// Potential of the stretching force, (EA/8L) (eta' K eta)^2.
double stretching_potential(const ModalBeamModel& model, const Eigen::VectorXd& eta);

/// Rectangular solid cross-section derived from EI and rhoA for a given material.
struct RectangularSection {
    double thickness;
    double width;
    double EA;
};
RectangularSection rectangular_section(double EI, double rhoA, double E, double rho);

}  // namespace nlmodal
