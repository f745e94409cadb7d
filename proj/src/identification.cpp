#include "nlmodal/identification.hpp"

#include <algorithm>
#include <cmath>

#include "nlmodal/error.hpp"
#include "nlmodal/numerics.hpp"

namespace nlmodal {

std::string to_string(Quadrature q) {
    switch (q) {
        case Quadrature::Rectangular: return "rectangular";
        case Quadrature::Trapezoidal: return "trapezoidal";
        case Quadrature::ChebyshevGauss: return "chebyshev-gauss";
    }
    return "?";
}

Quadrature quadrature_from_string(const std::string& s) {
    if (s == "rectangular") return Quadrature::Rectangular;
    if (s == "trapezoidal") return Quadrature::Trapezoidal;
    if (s == "chebyshev-gauss") return Quadrature::ChebyshevGauss;
    fail(ErrorCode::InvalidArgument, "unknown quadrature rule '" + s + "'");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::ModelFree: return "model-free";
        case Method::ModelBased: return "model-based";
        case Method::ForceBased: return "force-based";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "model-free") return Method::ModelFree;
    if (s == "model-based") return Method::ModelBased;
    if (s == "force-based") return Method::ForceBased;
    fail(ErrorCode::InvalidArgument, "unknown identification method '" + s + "'");
}

std::vector<double> equidistant_positions(int n, double L, Boundary boundary) {
    require(n >= 1, "need at least one sensor");
    std::vector<double> xs(n);
    const double step = boundary == Boundary::Cantilever ? L / n : L / (n + 1);
    for (int i = 0; i < n; ++i) xs[i] = (i + 1) * step;
    return xs;
}

std::vector<double> chebyshev_gauss_positions(int n, double L) {
    require(n >= 1, "need at least one sensor");
    std::vector<double> xs(n);
    // cos((2i-1) pi / 2n) for i = n..1 gives ascending nodes
    for (int i = 0; i < n; ++i) {
        const int k = n - i;
        const double t = std::cos((2.0 * k - 1.0) * kPi / (2.0 * n));
        xs[i] = 0.5 * L * (1.0 + t);
    }
    return xs;
}

std::vector<double> supported_ends(Boundary boundary, double L) {
    switch (boundary) {
        case Boundary::Cantilever: return {0.0};
        case Boundary::PinnedPinned:
        case Boundary::ClampedClamped: return {0.0, L};
    }
    return {};
}

void SensorLayout::validate(double L) const {
    require(L > 0.0, "beam length must be positive");
    require(!positions.empty(), "sensor layout is empty");
    for (std::size_t i = 0; i < positions.size(); ++i) {
        require(std::isfinite(positions[i]) && positions[i] >= 0.0 && positions[i] <= L,
                "sensor position outside [0, L]");
        if (i > 0) require(positions[i] > positions[i - 1], "sensor positions must increase strictly");
    }
    for (double z : known_zero_boundaries)
        require(z == 0.0 || z == L, "known-zero points must be beam ends");
}

Eigen::VectorXd quadrature_weights(const SensorLayout& layout, double L) {
    layout.validate(L);
    const int n = static_cast<int>(layout.positions.size());
    Eigen::VectorXd w(n);
    switch (layout.quadrature) {
        case Quadrature::Rectangular:
            w.setConstant(L / n);
            break;
        case Quadrature::Trapezoidal: {
            // Known zeros join the node set but carry no sensor weight.
            std::vector<double> nodes = layout.positions;
            for (double z : layout.known_zero_boundaries)
                if (std::find(nodes.begin(), nodes.end(), z) == nodes.end()) nodes.push_back(z);
            std::sort(nodes.begin(), nodes.end());
            for (int i = 0; i < n; ++i) {
                const auto it = std::find(nodes.begin(), nodes.end(), layout.positions[i]);
                const auto k = static_cast<std::size_t>(it - nodes.begin());
                const double left = k > 0 ? nodes[k] - nodes[k - 1] : 0.0;
                const double right = k + 1 < nodes.size() ? nodes[k + 1] - nodes[k] : 0.0;
                w[i] = 0.5 * (left + right);
            }
            if (n == 1 && w[0] == 0.0) w[0] = L;
            break;
        }
        case Quadrature::ChebyshevGauss: {
            const auto ref = chebyshev_gauss_positions(n, L);
            for (int i = 0; i < n; ++i) {
                if (std::abs(ref[i] - layout.positions[i]) > 1e-9 * L)
                    fail(ErrorCode::InvalidArgument,
                         "chebyshev-gauss weights need sensors at the Chebyshev nodes");
                const double t = 2.0 * ref[i] / L - 1.0;
                w[i] = kPi / n * std::sqrt(std::max(0.0, 1.0 - t * t)) * 0.5 * L;
            }
            break;
        }
    }
    return w;
}

LinearModalBasis make_basis(const ModalBeamModel& model, const std::vector<double>& positions,
                            const std::vector<int>& modes) {
    require(!modes.empty(), "basis needs at least one mode");
    const Eigen::MatrixXd all = model.shape_matrix(positions);
    LinearModalBasis basis;
    basis.Phi_sens.resize(all.rows(), static_cast<Eigen::Index>(modes.size()));
    basis.gamma.resize(static_cast<Eigen::Index>(modes.size()));
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const int j = modes[k];
        if (j < 0 || j >= model.nmod()) fail(ErrorCode::OutOfRange, "basis mode index out of range");
        basis.Phi_sens.col(static_cast<Eigen::Index>(k)) = all.col(j);
        basis.gamma[static_cast<Eigen::Index>(k)] = model.gamma()[j];
    }
    basis.source = BasisSource::Model;
    return basis;
}

Eigen::VectorXcd estimate_modal_coordinates(const Eigen::VectorXcd& q1, const LinearModalBasis& basis) {
    if (q1.size() != basis.nsens())
        fail(ErrorCode::InvalidArgument, "sensor count does not match the basis");
    if (basis.nsens() < basis.nmod())
        fail(ErrorCode::RankDeficient, "fewer sensors than basis modes");
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;
    cod.setThreshold(kRankTolerance);
    cod.compute(basis.Phi_sens);
    if (cod.rank() < basis.nmod())
        fail(ErrorCode::RankDeficient, "sensor placement cannot separate the basis modes");
    Eigen::VectorXcd eta(basis.nmod());
    eta.real() = cod.solve(q1.real());
    eta.imag() = cod.solve(q1.imag());
    return eta;
}

double damping_model_free(const Eigen::VectorXcd& q1, cdouble qb_hat, const Eigen::VectorXd& weights) {
    require(q1.size() >= 1, "need at least one sensor");
    require(q1.size() == weights.size(), "weights do not match the sensor count");
    require(std::abs(qb_hat) > 0.0, "base amplitude must be nonzero");
    cdouble proj = 0.0;
    double energy = 0.0;
    for (Eigen::Index i = 0; i < q1.size(); ++i) {
        proj += weights[i] * std::conj(q1[i]);
        energy += weights[i] * std::norm(q1[i]);
    }
    if (!(energy > 0.0)) fail(ErrorCode::NoResponse, "response is zero at every sensor");
    return 0.5 * std::abs(proj * qb_hat) / energy;
}

ModelBasedEstimate damping_model_based(const Eigen::VectorXcd& q1, cdouble qb_hat,
                                       const LinearModalBasis& basis) {
    require(std::abs(qb_hat) > 0.0, "base amplitude must be nonzero");
    ModelBasedEstimate est;
    est.eta1 = estimate_modal_coordinates(q1, basis);
    const double energy = est.eta1.squaredNorm();
    if (!(energy > 0.0)) fail(ErrorCode::NoResponse, "estimated modal response is zero");
    const cdouble proj = est.eta1.dot(basis.gamma.cast<cdouble>());
    est.D = 0.5 * std::abs(proj * qb_hat) / energy;
    return est;
}

double damping_force_excitation(const Eigen::VectorXcd& q1, const Eigen::VectorXcd& f1,
                                double omega, double a) {
    require(a > 0.0 && omega > 0.0, "amplitude and frequency must be positive");
    require(q1.size() == f1.size(), "response and force sizes differ");
    const cdouble work = q1.dot(f1);  // q1^H f1
    return work.imag() / (2.0 * omega * omega * a * a);
}

double modal_amplitude(const Eigen::VectorXcd& q1, const LinearModalBasis& basis) {
    return estimate_modal_coordinates(q1, basis).norm();
}

Eigen::MatrixXcd mass_normalized_shape(const Eigen::MatrixXcd& qh, double a, double theta) {
    require(a > 0.0, "modal amplitude must be positive");
    return qh * (std::polar(1.0, -theta) / a);
}

double check_phase_resonance(cdouble q1_ref, cdouble qb_hat) {
    require(std::abs(qb_hat) > 0.0, "base amplitude must be nonzero");
    const double scale = std::abs(qb_hat);
    if (!(std::abs(q1_ref) > 1e-12 * scale))
        fail(ErrorCode::IndeterminatePhase, "reference response too small for a phase");
    return wrap_angle(std::arg(q1_ref) - std::arg(qb_hat) + 0.5 * kPi);
}

IdentifiedBackbone identify_backbone(const TestRecord& record, const ModalBeamModel& model,
                                     const IdentificationSetup& setup) {
    const double L = model.config().L;
    std::vector<int> channels = setup.channels;
    if (channels.empty())
        for (int i = 0; i < static_cast<int>(record.sensor_positions.size()); ++i) channels.push_back(i);

    IdentifiedBackbone out;
    out.method = setup.method;
    out.sensor_set = setup.sensor_set;
    out.quadrature = setup.quadrature;
    for (int c : channels) {
        if (c < 0 || c >= static_cast<int>(record.sensor_positions.size()))
            fail(ErrorCode::OutOfRange, "sensor channel out of range");
        out.sensor_positions.push_back(record.sensor_positions[c]);
    }
    const int nsens = static_cast<int>(channels.size());

    std::vector<int> modes = setup.basis_modes;
    if (modes.empty())
        for (int j = 0; j < std::min(nsens, model.nmod()); ++j) modes.push_back(j);
    const LinearModalBasis basis = make_basis(model, out.sensor_positions, modes);

    Eigen::VectorXd weights;
    if (setup.method == Method::ModelFree) {
        SensorLayout layout{out.sensor_positions, setup.quadrature, setup.known_zero_boundaries};
        weights = quadrature_weights(layout, L);
    } else if (setup.method == Method::ForceBased) {
        fail(ErrorCode::InvalidArgument, "base-excited records carry no force channel");
    }

    for (const auto& lv : record.levels) {
        if (setup.locked_only && !lv.locked) continue;
        if (lv.sensors.channels() == 0) continue;
        // Rotate so that the base displacement is real and positive.
        const cdouble rot = std::polar(1.0, -std::arg(lv.qb_hat));
        const double qb = std::abs(lv.qb_hat);
        const int H = lv.sensors.H;
        Eigen::MatrixXcd qh(nsens, H + 1);
        for (int i = 0; i < nsens; ++i)
            for (int h = 0; h <= H; ++h)
                qh(i, h) = lv.sensors.at(channels[i], h) * std::pow(rot, h);
        const Eigen::VectorXcd q1 = qh.col(std::min(1, H));

        IdentifiedPoint p;
        p.omega = lv.Omega;
        p.qb_hat = qb;
        p.level = lv.level;
        if (setup.plot_channel >= 0 && setup.plot_channel < lv.sensors.channels())
            p.amp_plot = std::abs(lv.sensors.at(setup.plot_channel, 1));

        const ModelBasedEstimate mb = damping_model_based(q1, qb, basis);
        p.a = mb.eta1.norm();
        if (setup.method == Method::ModelBased) {
            p.D = mb.D;
            const cdouble proj = basis.gamma.cast<cdouble>().dot(mb.eta1);  // Gamma^T eta
            p.theta = std::arg(proj);
            p.force_factor = std::abs(proj) / p.a;
        } else {
            p.D = damping_model_free(q1, qb, weights);
            cdouble mean = 0.0;
            double energy = 0.0;
            for (int i = 0; i < nsens; ++i) {
                mean += weights[i] * q1[i];
                energy += weights[i] * std::norm(q1[i]);
            }
            p.theta = std::arg(mean);
            p.force_factor = p.a * std::abs(mean) / energy;
        }
        if (!std::isfinite(p.D)) fail(ErrorCode::NonFinite, "identified damping is not finite");
        p.v = mass_normalized_shape(qh, p.a, p.theta);
        out.points.push_back(std::move(p));
    }
    return out;
}

}  // namespace nlmodal
