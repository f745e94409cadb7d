#include "nlmodal/spectrum.hpp"

#include <cmath>
#include <vector>

#include "nlmodal/error.hpp"
#include "nlmodal/numerics.hpp"

namespace nlmodal {

Eigen::VectorXcd real_to_complex(const Eigen::Ref<const Eigen::VectorXd>& block, int H) {
    require(block.size() == real_block_size(H), "real_to_complex: block size mismatch");
    Eigen::VectorXcd out(H + 1);
    out(0) = block(0);
    for (int h = 1; h <= H; ++h) out(h) = cdouble(block(2 * h - 1), -block(2 * h));
    return out;
}

Eigen::VectorXd complex_to_real(const Eigen::Ref<const Eigen::VectorXcd>& coeffs, int H) {
    require(coeffs.size() == H + 1, "complex_to_real: coefficient count mismatch");
    Eigen::VectorXd out(real_block_size(H));
    out(0) = coeffs(0).real();
    for (int h = 1; h <= H; ++h) {
        out(2 * h - 1) = coeffs(h).real();
        out(2 * h) = -coeffs(h).imag();
    }
    return out;
}

HarmonicTransform::HarmonicTransform(int H, int N) : H_(H), N_(N) {
    require(H >= 0, "HarmonicTransform: H must be non-negative");
    require(N > 2 * H, "HarmonicTransform: N must exceed 2H");
    const int nb = real_block_size(H);
    inv_.resize(N, nb);
    fwd_.resize(nb, N);
    for (int n = 0; n < N; ++n) {
        const double tau = 2.0 * kPi * n / N;
        inv_(n, 0) = 1.0;
        fwd_(0, n) = 1.0 / N;
        for (int h = 1; h <= H; ++h) {
            const double c = std::cos(h * tau), s = std::sin(h * tau);
            inv_(n, 2 * h - 1) = c;
            inv_(n, 2 * h) = s;
            fwd_(2 * h - 1, n) = 2.0 * c / N;
            fwd_(2 * h, n) = 2.0 * s / N;
        }
    }
    // d/dtau of c cos(h tau) + s sin(h tau) = h s cos - h c sin.
    der_.setZero(nb, nb);
    for (int h = 1; h <= H; ++h) {
        der_(2 * h - 1, 2 * h) = h;
        der_(2 * h, 2 * h - 1) = -h;
    }
}

Spectrum extract_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                          std::span<const double> phases, int H, double Omega) {
    const auto n = samples.rows();
    require(static_cast<std::size_t>(n) == phases.size(), "extract_spectrum: phase count mismatch");
    require(H >= 0, "extract_spectrum: H must be non-negative");
    const int nb = real_block_size(H);
    require(n >= nb, "extract_spectrum: too few samples");

    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(nb, samples.cols());
    Eigen::VectorXd row(nb);
    for (Eigen::Index k = 0; k < n; ++k) {
        row(0) = 1.0;
        for (int h = 1; h <= H; ++h) {
            row(2 * h - 1) = std::cos(h * phases[k]);
            row(2 * h) = std::sin(h * phases[k]);
        }
        normal.selfadjointView<Eigen::Lower>().rankUpdate(row);
        rhs.noalias() += row * samples.row(k);
    }
    normal = normal.selfadjointView<Eigen::Lower>();
    const Eigen::MatrixXd blocks = normal.ldlt().solve(rhs);

    Spectrum s;
    s.Omega = Omega;
    s.H = H;
    s.coeffs.resize(samples.cols(), H + 1);
    s.residual_rms.setZero(samples.cols());
    for (Eigen::Index c = 0; c < samples.cols(); ++c) {
        s.coeffs.row(c) = real_to_complex(blocks.col(c), H).transpose();
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        row(0) = 1.0;
        for (int h = 1; h <= H; ++h) {
            row(2 * h - 1) = std::cos(h * phases[k]);
            row(2 * h) = std::sin(h * phases[k]);
        }
        const Eigen::RowVectorXd r = samples.row(k) - row.transpose() * blocks;
        s.residual_rms += r.array().square().matrix().transpose();
    }
    s.residual_rms = (s.residual_rms / static_cast<double>(n)).cwiseSqrt();
    s.periods = static_cast<int>(std::floor((phases.back() - phases.front()) / (2.0 * kPi) + 0.5));
    return s;
}

Spectrum extract_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& samples, double dt,
                          double Omega, int H) {
    require(dt > 0.0 && Omega > 0.0, "extract_spectrum: dt and Omega must be positive");
    const auto n = samples.rows();
    const double period_samples = 2.0 * kPi / (Omega * dt);
    const double periods = n / period_samples;
    const int whole = static_cast<int>(std::floor(periods + 1e-9));
    require(whole >= 1, "extract_spectrum: window shorter than one period");
    Eigen::Index used = n;
    bool trimmed = false;
    if (std::abs(periods - whole) > 1e-9) {
        used = static_cast<Eigen::Index>(std::llround(whole * period_samples));
        used = std::min(used, n);
        trimmed = true;
    }
    std::vector<double> phases(used);
    for (Eigen::Index k = 0; k < used; ++k) phases[k] = Omega * dt * k;
    Spectrum s = extract_spectrum(samples.topRows(used), phases, H, Omega);
    s.trimmed = trimmed;
    s.periods = whole;
    return s;
}

double distortion_factor(const Spectrum& s, int channel) {
    double total = s.residual_rms(channel) * s.residual_rms(channel);
    for (int h = 1; h <= s.H; ++h) total += 0.5 * std::norm(s.coeffs(channel, h));
    if (total <= 0.0) return 0.0;
    return std::sqrt(0.5 * std::norm(s.coeffs(channel, 1)) / total);
}

}  // namespace nlmodal
