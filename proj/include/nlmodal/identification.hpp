#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nlmodal/beam_model.hpp"
#include "nlmodal/spectrum.hpp"
#include "nlmodal/test_record.hpp"

namespace nlmodal {

enum class Quadrature { Rectangular, Trapezoidal, ChebyshevGauss };

std::string to_string(Quadrature q);
Quadrature quadrature_from_string(const std::string& s);

struct SensorLayout {
    std::vector<double> positions;
    Quadrature quadrature = Quadrature::Trapezoidal;
    /// Boundary points with prescribed zero deflection (not sensors).
    std::vector<double> known_zero_boundaries;

    void validate(double L) const;
};

/// Equidistant sensors that leave out supported ends: i L/(n+1) between two
/// supports, i L/n for a cantilever (last sensor at the free tip).
std::vector<double> equidistant_positions(int n, double L, Boundary boundary);
/// Chebyshev-Gauss nodes mapped to [0, L], ascending.
std::vector<double> chebyshev_gauss_positions(int n, double L);
/// Supported ends of a beam (known zero deflection).
std::vector<double> supported_ends(Boundary boundary, double L);

/// Weights w_i with int_0^L f dx ~ sum_i w_i f(x_i) (known zeros contribute nothing).
Eigen::VectorXd quadrature_weights(const SensorLayout& layout, double L);

enum class BasisSource { Model, Experimental };

/// Mass-normalized linear modes sampled at the sensors and the base participation.
struct LinearModalBasis {
    Eigen::MatrixXd Phi_sens;  ///< nsens x nmod
    Eigen::VectorXd gamma;     ///< Phi' M b
    BasisSource source = BasisSource::Model;

    int nmod() const { return static_cast<int>(Phi_sens.cols()); }
    int nsens() const { return static_cast<int>(Phi_sens.rows()); }
};

LinearModalBasis make_basis(const ModalBeamModel& model, const std::vector<double>& positions,
                            const std::vector<int>& modes);

/// Relative rank tolerance of the sensor/mode least-squares problem.
inline constexpr double kRankTolerance = 1e-10;

/// Least-squares modal coordinates of the sensor fundamentals.
Eigen::VectorXcd estimate_modal_coordinates(const Eigen::VectorXcd& q1, const LinearModalBasis& basis);

/// Response-only damping estimate by quadrature of the response field.
double damping_model_free(const Eigen::VectorXcd& q1, cdouble qb_hat, const Eigen::VectorXd& weights);

struct ModelBasedEstimate {
    double D;
    Eigen::VectorXcd eta1;
};

/// Damping from least-squares modal coordinates and the base participation vector.
ModelBasedEstimate damping_model_based(const Eigen::VectorXcd& q1, cdouble qb_hat,
                                       const LinearModalBasis& basis);

/// Damping from a measured force: supplied fundamental power over omega^3 a^2,
/// with P1 = omega/2 Im(q1^H f1) under the exp(+i Omega t) convention.
double damping_force_excitation(const Eigen::VectorXcd& q1, const Eigen::VectorXcd& f1,
                                double omega, double a);

double modal_amplitude(const Eigen::VectorXcd& q1, const LinearModalBasis& basis);

/// v_h = q_h exp(-i theta) / a for every channel (rows) and harmonic (columns).
Eigen::MatrixXcd mass_normalized_shape(const Eigen::MatrixXcd& qh, double a, double theta);

/// Deviation of arg(q1_ref) from -pi/2 relative to the base displacement phase.
double check_phase_resonance(cdouble q1_ref, cdouble qb_hat);

enum class Method { ModelFree, ModelBased, ForceBased };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct IdentifiedPoint {
    double a = 0.0;
    double omega = 0.0;
    double D = 0.0;
    double theta = 0.0;         ///< modal phase in the base-real gauge
    double force_factor = 0.0;  ///< |v1^H M b|
    double qb_hat = 0.0;
    double level = 0.0;
    double amp_plot = 0.0;      ///< |q1| at the plotting channel
    Eigen::MatrixXcd v;         ///< nsens x (H+1) mass-normalized shape at sensors
};

struct IdentifiedBackbone {
    Method method = Method::ModelBased;
    std::string sensor_set;
    Quadrature quadrature = Quadrature::Trapezoidal;
    std::vector<double> sensor_positions;
    std::vector<IdentifiedPoint> points;
};

struct IdentificationSetup {
    Method method = Method::ModelBased;
    std::string sensor_set = "all";
    std::vector<int> channels;       ///< record channels forming the sensor set
    Quadrature quadrature = Quadrature::Trapezoidal;
    std::vector<double> known_zero_boundaries;
    std::vector<int> basis_modes;    ///< empty: first min(nsens, nmod) modes
    int plot_channel = -1;           ///< record channel used for amp_plot
    bool locked_only = true;
};

/// Applies an estimator to every level of a phase-resonant test.
IdentifiedBackbone identify_backbone(const TestRecord& record, const ModalBeamModel& model,
                                     const IdentificationSetup& setup);

}  // namespace nlmodal
