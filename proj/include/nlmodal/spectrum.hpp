#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

namespace nlmodal {

using cdouble = std::complex<double>;

/// Multi-channel harmonic coefficients with c(t) = Re sum_h c_h exp(i h Omega t).
/// The h = 0 entry is real.
struct Spectrum {
    double Omega = 0.0;
    int H = 0;
    Eigen::MatrixXcd coeffs;       ///< channels x (H + 1)
    Eigen::VectorXd residual_rms;  ///< non-harmonic content per channel
    bool trimmed = false;          ///< window was cut to an integer period count
    int periods = 0;

    int channels() const { return static_cast<int>(coeffs.rows()); }
    cdouble at(int channel, int h) const { return coeffs(channel, h); }
    Eigen::VectorXcd harmonic(int h) const { return coeffs.col(h); }
};

/// Real coefficient block [c0, c1, s1, ..., cH, sH] for x = c0 + sum c_h cos + s_h sin.
inline int real_block_size(int H) { return 2 * H + 1; }
Eigen::VectorXcd real_to_complex(const Eigen::Ref<const Eigen::VectorXd>& block, int H);
Eigen::VectorXd complex_to_real(const Eigen::Ref<const Eigen::VectorXcd>& coeffs, int H);

/// Sampled Fourier synthesis/analysis on N equidistant phases of one period.
class HarmonicTransform {
public:
    HarmonicTransform(int H, int N);

    int H() const { return H_; }
    int N() const { return N_; }
    /// N x (2H+1): coefficient block -> time samples.
    const Eigen::MatrixXd& synthesis() const { return inv_; }
    /// (2H+1) x N: time samples -> coefficient block (exact for N > 2H).
    const Eigen::MatrixXd& analysis() const { return fwd_; }
    /// (2H+1) x (2H+1) time derivative in units of Omega.
    const Eigen::MatrixXd& derivative() const { return der_; }

private:
    int H_;
    int N_;
    Eigen::MatrixXd inv_;
    Eigen::MatrixXd fwd_;
    Eigen::MatrixXd der_;
};

/// Least-squares harmonic fit of samples (rows = time) against their oscillator
/// phases. Reduces to the DFT when the phases cover whole periods uniformly.
Spectrum extract_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                          std::span<const double> phases, int H, double Omega);

/// Uniformly sampled window at constant Omega. A non-integer period count is
/// trimmed to the largest integer count and flagged in the result.
Spectrum extract_spectrum(const Eigen::Ref<const Eigen::MatrixXd>& samples, double dt,
                          double Omega, int H);

/// Fundamental rms over total AC rms of a channel described by its spectrum.
double distortion_factor(const Spectrum& s, int channel);

}  // namespace nlmodal
