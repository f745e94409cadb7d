#include "nlmodal/beam_model.hpp"

#include <cmath>
#include <sstream>

#include "nlmodal/error.hpp"
#include "nlmodal/numerics.hpp"

namespace nlmodal {

std::string to_string(Boundary b) {
    switch (b) {
        case Boundary::Cantilever: return "cantilever";
        case Boundary::PinnedPinned: return "pinned-pinned";
        case Boundary::ClampedClamped: return "clamped-clamped";
    }
    return "unknown";
}

Boundary boundary_from_string(const std::string& s) {
    if (s == "cantilever") return Boundary::Cantilever;
    if (s == "pinned-pinned") return Boundary::PinnedPinned;
    if (s == "clamped-clamped") return Boundary::ClampedClamped;
    fail(ErrorCode::InvalidArgument, "unknown boundary '" + s + "'");
}

void BeamConfig::validate() const {
    require(EI > 0.0, "BeamConfig: EI must be positive");
    require(rhoA > 0.0, "BeamConfig: rhoA must be positive");
    require(L > 0.0, "BeamConfig: L must be positive");
    require(nmod >= 1, "BeamConfig: nmod must be at least 1");
    require(static_cast<int>(zeta.size()) == nmod, "BeamConfig: zeta needs nmod entries");
    for (double z : zeta) require(z >= 0.0, "BeamConfig: zeta must be non-negative");
}

double characteristic_root(Boundary boundary, int j) {
    require(j >= 0, "characteristic_root: negative mode index");
    if (j >= kMaxModes) {
        fail(ErrorCode::RootFinding, "characteristic_root: mode " + std::to_string(j + 1) +
                                         " exceeds the root bracket table");
    }
    switch (boundary) {
        case Boundary::PinnedPinned:
            return (j + 1) * kPi;
        case Boundary::Cantilever: {
            // cosh(l) cos(l) = -1, scaled by 1/cosh(l) to stay bounded.
            auto f = [](double l) { return std::cos(l) + 1.0 / std::cosh(l); };
            return bisect(f, j * kPi, (j + 1) * kPi, 1e-15);
        }
        case Boundary::ClampedClamped: {
            auto f = [](double l) { return std::cos(l) - 1.0 / std::cosh(l); };
            return bisect(f, (j + 1) * kPi, (j + 2) * kPi, 1e-15);
        }
    }
    fail(ErrorCode::RootFinding, "characteristic_root: unsupported boundary");
}

ModalBeamModel::ModalBeamModel(BeamConfig config, NonlinearElement nl)
    : config_(std::move(config)), nl_(std::move(nl)) {
    config_.validate();
    const int n = config_.nmod;
    const double L = config_.L;
    roots_.resize(n);
    omega_.resize(n);
    sigma_.setZero(n);
    one_minus_.setZero(n);
    norm_ = 1.0 / std::sqrt(config_.rhoA * L);
    const double c = std::sqrt(config_.EI / config_.rhoA);
    for (int j = 0; j < n; ++j) {
        const double lam = characteristic_root(config_.boundary, j);
        roots_(j) = lam;
        omega_(j) = lam * lam / (L * L) * c;
        const double e = std::exp(-lam);
        if (config_.boundary == Boundary::Cantilever) {
            const double den = std::sinh(lam) + std::sin(lam);
            sigma_(j) = (std::cosh(lam) + std::cos(lam)) / den;
            one_minus_(j) = (-e + std::sin(lam) - std::cos(lam)) / den;
        } else if (config_.boundary == Boundary::ClampedClamped) {
            const double den = std::sinh(lam) - std::sin(lam);
            sigma_(j) = (std::cosh(lam) - std::cos(lam)) / den;
            one_minus_(j) = (-e - std::sin(lam) + std::cos(lam)) / den;
        }
    }

    const auto rule = composite_gauss(64, 10, 0.0, L);
    gamma_.setZero(n);
    for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        gamma_ += rule.weights[q] * config_.rhoA * shapes_at(rule.nodes[q]);
    }

    if (const auto* j = std::get_if<Jenkins>(&nl_)) {
        require(j->x_c >= 0.0 && j->x_c <= L, "Jenkins: x_c outside [0, L]");
        require(j->kt > 0.0, "Jenkins: kt must be positive");
        require(j->muN > 0.0, "Jenkins: muN must be positive");
        contact_ = shapes_at(j->x_c);
    }
    if (const auto* bs = std::get_if<BendingStretching>(&nl_)) {
        require(bs->EA_over_2L >= 0.0, "BendingStretching: coefficient must be non-negative");
        stretch_.setZero(n, n);
        for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
            Eigen::VectorXd d(n);
            for (int k = 0; k < n; ++k) d(k) = slope(k, rule.nodes[q]);
            stretch_ += rule.weights[q] * d * d.transpose();
        }
        stretch_ = 0.5 * (stretch_ + stretch_.transpose()).eval();
    }
}

Eigen::VectorXd ModalBeamModel::zeta() const {
    return Eigen::Map<const Eigen::VectorXd>(config_.zeta.data(), config_.nmod);
}

double ModalBeamModel::shape(int j, double x) const {
    require(j >= 0 && j < config_.nmod, "shape: mode index out of range");
    const double L = config_.L;
    require(x >= -1e-12 * L && x <= L * (1.0 + 1e-12), "shape: position outside [0, L]");
    const double xi = roots_(j) * x / L;
    if (config_.boundary == Boundary::PinnedPinned) return norm_ * std::sqrt(2.0) * std::sin(xi);
    return norm_ * (std::exp(-xi) + one_minus_(j) * std::sinh(xi) - std::cos(xi) +
                    sigma_(j) * std::sin(xi));
}

double ModalBeamModel::slope(int j, double x) const {
    require(j >= 0 && j < config_.nmod, "slope: mode index out of range");
    const double L = config_.L;
    require(x >= -1e-12 * L && x <= L * (1.0 + 1e-12), "slope: position outside [0, L]");
    const double k = roots_(j) / L;
    const double xi = k * x;
    if (config_.boundary == Boundary::PinnedPinned) {
        return norm_ * std::sqrt(2.0) * k * std::cos(xi);
    }
    return norm_ * k *
           (-std::exp(-xi) + one_minus_(j) * std::cosh(xi) + std::sin(xi) +
            sigma_(j) * std::cos(xi));
}

Eigen::VectorXd ModalBeamModel::shapes_at(double x) const {
    Eigen::VectorXd out(config_.nmod);
    for (int j = 0; j < config_.nmod; ++j) out(j) = shape(j, x);
    return out;
}

Eigen::MatrixXd ModalBeamModel::shape_matrix(const std::vector<double>& xs) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), config_.nmod);
    for (std::size_t i = 0; i < xs.size(); ++i) out.row(i) = shapes_at(xs[i]).transpose();
    return out;
}

Eigen::MatrixXd ModalBeamModel::tangent_stiffness_at_rest() const {
    Eigen::MatrixXd K = omega_.array().square().matrix().asDiagonal();
    if (const auto* j = std::get_if<Jenkins>(&nl_)) K += j->kt * contact_ * contact_.transpose();
    return K;
}

ModalBeamModel build_beam_model(const BeamConfig& config, const NonlinearElement& nl) {
    return ModalBeamModel(config, nl);
}

JenkinsUpdate jenkins_return_map(const Jenkins& el, double w, double slider) {
    const double trial = el.kt * (w - slider);
    if (std::abs(trial) <= el.muN) return {trial, slider};
    const double f = std::copysign(el.muN, trial);
    return {f, w - f / el.kt};
}

ModalForce nonlinear_modal_force(const ModalBeamModel& model, const Eigen::VectorXd& eta,
                                 const Eigen::VectorXd& /*eta_dot*/, HystereticState state) {
    require(eta.size() == model.nmod(), "nonlinear_modal_force: eta has wrong length");
    ModalForce out{Eigen::VectorXd::Zero(model.nmod()), state};
    if (const auto* j = std::get_if<Jenkins>(&model.nonlinearity())) {
        const double w = model.contact_shapes().dot(eta);
        const auto upd = jenkins_return_map(*j, w, state.slider);
        out.g = model.contact_shapes() * upd.force;
        out.state.slider = upd.slider;
    } else if (const auto* bs = std::get_if<BendingStretching>(&model.nonlinearity())) {
        const Eigen::VectorXd Ke = model.stretching_matrix() * eta;
        out.g = bs->EA_over_2L * eta.dot(Ke) * Ke;
    }
    return out;
}

double stretching_potential(const ModalBeamModel& model, const Eigen::VectorXd& eta) {
    const auto* bs = std::get_if<BendingStretching>(&model.nonlinearity());
    if (!bs) return 0.0;
    const double s = eta.dot(model.stretching_matrix() * eta);
    return 0.25 * bs->EA_over_2L * s * s;
}

RectangularSection rectangular_section(double EI, double rhoA, double E, double rho) {
    require(EI > 0 && rhoA > 0 && E > 0 && rho > 0, "rectangular_section: positive inputs");
    const double area = rhoA / rho;
    const double h = std::sqrt(12.0 * EI / (E * area));
    return {h, area / h, E * area};
}

}  // namespace nlmodal
