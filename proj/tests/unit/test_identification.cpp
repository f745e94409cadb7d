#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "nlmodal/identification.hpp"
#include "nlmodal/numerics.hpp"
#include "support.hpp"

using namespace nlmodal;

namespace {

ModalBeamModel pinned_beam(int nmod = 5) {
    BeamConfig c{Boundary::PinnedPinned, 1.0, 1.0, 1.0, nmod, std::vector<double>(nmod, 0.01)};
    return ModalBeamModel(c, std::monostate{});
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

// Phase-resonant single-mode response to a unit real base displacement.
Eigen::VectorXcd single_mode_response(const ModalBeamModel& m, const std::vector<double>& xs, double qb) {
    const double eta_mag = m.gamma()(0) * qb / (2 * m.zeta()(0));
    Eigen::VectorXcd q1(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) q1(static_cast<Eigen::Index>(i)) = cdouble(0, -eta_mag) * m.shape(0, xs[i]);
    return q1;
}

}  // namespace

TEST_CASE("trapezoidal weights include the known-zero ends") {
    const double L = 0.9;
    SensorLayout pinned{{L / 3, 2 * L / 3}, Quadrature::Trapezoidal, {0.0, L}};
    const Eigen::VectorXd w = quadrature_weights(pinned, L);
    CHECK(w(0) == doctest::Approx(L / 3));
    CHECK(w(1) == doctest::Approx(L / 3));

    SensorLayout cantilever{{L / 3, 2 * L / 3, L}, Quadrature::Trapezoidal, {0.0}};
    const Eigen::VectorXd wc = quadrature_weights(cantilever, L);
    CHECK(wc(0) == doctest::Approx(L / 3));
    CHECK(wc(2) == doctest::Approx(L / 6));

    SensorLayout single{{L / 2}, Quadrature::Trapezoidal, {}};
    CHECK(quadrature_weights(single, L)(0) == doctest::Approx(L));
}

TEST_CASE("trapezoidal weights integrate a half sine like the textbook rule") {
    const double L = 1.3;
    for (int n : {5, 15}) {
        SensorLayout layout{equidistant_positions(n, L, Boundary::PinnedPinned), Quadrature::Trapezoidal, {0.0, L}};
        const Eigen::VectorXd w = quadrature_weights(layout, L);
        double s = 0.0, textbook = 0.0;
        const double h = L / (n + 1);
        for (int i = 0; i < n; ++i) s += w(i) * std::sin(kPi * layout.positions[i] / L);
        for (int i = 0; i <= n + 1; ++i) textbook += (i == 0 || i == n + 1 ? 0.5 : 1.0) * h * std::sin(kPi * i * h / L);
        CHECK(s == doctest::Approx(textbook).epsilon(1e-13));
        if (n == 15) CHECK(s == doctest::Approx(2 * L / kPi).epsilon(0.01));
    }
}

TEST_CASE("rectangular and Chebyshev weights sum to the beam length") {
    const double L = 2.0;
    SensorLayout rect{equidistant_positions(7, L, Boundary::Cantilever), Quadrature::Rectangular, {}};
    CHECK(quadrature_weights(rect, L).sum() == doctest::Approx(L));
    // Chebyshev-Gauss weights integrate f sqrt(1-t^2)/sqrt(1-t^2); check against int sin over [0, L]
    SensorLayout cheb{chebyshev_gauss_positions(24, L), Quadrature::ChebyshevGauss, {}};
    const Eigen::VectorXd w = quadrature_weights(cheb, L);
    double s = 0.0;
    for (int i = 0; i < 24; ++i) s += w(i) * std::sin(kPi * cheb.positions[i] / L);
    CHECK(s == doctest::Approx(2 * L / kPi).epsilon(5e-3));
}

TEST_CASE("Chebyshev weights reject other sensor positions") {
    SensorLayout layout{equidistant_positions(5, 1.0, Boundary::PinnedPinned), Quadrature::ChebyshevGauss, {}};
    CHECK(code_of([&] { quadrature_weights(layout, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("single-mode model-based damping is exact") {
    const auto m = pinned_beam();
    for (int n : {1, 3, 8}) {
        const auto xs = equidistant_positions(n, 1.0, Boundary::PinnedPinned);
        const auto est = damping_model_based(single_mode_response(m, xs, 1e-3), 1e-3, make_basis(m, xs, {0}));
        CHECK(est.D == doctest::Approx(0.01).epsilon(1e-12));
    }
}

TEST_CASE("single-mode model-free damping converges with sensor count") {
    const auto m = pinned_beam();
    const auto xs = equidistant_positions(15, 1.0, Boundary::PinnedPinned);
    SensorLayout layout{xs, Quadrature::Trapezoidal, {0.0, 1.0}};
    const double D = damping_model_free(single_mode_response(m, xs, 1e-3), 1e-3, quadrature_weights(layout, 1.0));
    CHECK(D == doctest::Approx(0.01).epsilon(0.01));

    // one sensor at midspan: weight L, D = zeta |phi| / (Gamma phi^2)
    const std::vector<double> mid{0.5};
    SensorLayout one{mid, Quadrature::Trapezoidal, {}};
    const double D1 = damping_model_free(single_mode_response(m, mid, 1e-3), 1e-3, quadrature_weights(one, 1.0));
    const double phi = m.shape(0, 0.5);
    CHECK(D1 == doctest::Approx(0.01 / (m.gamma()(0) * std::abs(phi))).epsilon(1e-12));
}

TEST_CASE("modal amplitude is the norm of the modal coordinates") {
    const auto m = pinned_beam();
    const auto xs = equidistant_positions(6, 1.0, Boundary::PinnedPinned);
    const auto basis = make_basis(m, xs, {0, 1, 2});
    const Eigen::VectorXcd q1 = basis.Phi_sens.col(0).cast<cdouble>() * 3.0 +
                                basis.Phi_sens.col(1).cast<cdouble>() * cdouble(0, 4.0);
    CHECK(modal_amplitude(q1, basis) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(modal_amplitude(q1 * 0.25, basis) == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("least-squares modal coordinates are exact for random sensor positions") {
    const auto m = pinned_beam(6);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.02, 0.98);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> xs(8);
        for (double& x : xs) x = u(rng);
        std::sort(xs.begin(), xs.end());
        const auto basis = make_basis(m, xs, {0, 1, 2, 3});
        Eigen::VectorXcd eta(4);
        for (int j = 0; j < 4; ++j) eta(j) = cdouble(n01(rng), n01(rng));
        const Eigen::VectorXcd got = estimate_modal_coordinates(basis.Phi_sens.cast<cdouble>() * eta, basis);
        CHECK((got - eta).norm() < 1e-10 * eta.norm());
    }
}

TEST_CASE("too few or badly placed sensors are rank deficient") {
    const auto m = pinned_beam();
    const std::vector<double> two{0.3, 0.6};
    CHECK(code_of([&] { estimate_modal_coordinates(Eigen::VectorXcd::Ones(2), make_basis(m, two, {0, 1, 2})); }) ==
          ErrorCode::RankDeficient);
    // both sensors sit on nodes of the fourth mode
    const std::vector<double> quarters{0.25, 0.75};
    CHECK(code_of([&] { estimate_modal_coordinates(Eigen::VectorXcd::Ones(2), make_basis(m, quarters, {1, 3})); }) ==
          ErrorCode::RankDeficient);
    CHECK(code_of([&] { damping_model_free(Eigen::VectorXcd::Zero(2), 1.0, Eigen::VectorXd::Ones(2)); }) ==
          ErrorCode::NoResponse);
}

TEST_CASE("force-based damping of a single oscillator") {
    const double w = 7.0, zeta = 0.013;
    const cdouble f = std::polar(2.5, 0.3);
    Eigen::VectorXcd q1(1), f1(1);
    f1(0) = f;
    q1(0) = f / cdouble(0, 2 * zeta * w * w);  // resonant response
    CHECK(damping_force_excitation(q1, f1, w, std::abs(q1(0))) == doctest::Approx(zeta).epsilon(1e-10));
    q1(0) = f;  // in phase with the force: purely reactive
    CHECK(std::abs(damping_force_excitation(q1, f1, w, std::abs(f))) < 1e-15);
    q1(0) = 1.0;
    f1(0) = cdouble(0, 2.0);
    CHECK(damping_force_excitation(q1, f1, 1.0, 1.0) == doctest::Approx(1.0));
}

TEST_CASE("estimators are invariant to the global phase and scale") {
    const auto m = pinned_beam();
    const auto xs = equidistant_positions(5, 1.0, Boundary::PinnedPinned);
    const auto basis = make_basis(m, xs, {0, 1, 2});
    SensorLayout layout{xs, Quadrature::Trapezoidal, {0.0, 1.0}};
    const Eigen::VectorXd w = quadrature_weights(layout, 1.0);
    Eigen::VectorXcd q1 = single_mode_response(m, xs, 1e-3);
    q1 += 0.1 * basis.Phi_sens.col(2).cast<cdouble>() * q1.norm();
    const double Dmb = damping_model_based(q1, 1e-3, basis).D;
    const double Dmf = damping_model_free(q1, 1e-3, w);
    for (double alpha : {0.4, -2.0, 3.0})
        for (double s : {1e-3, 7.0}) {
            const cdouble r = s * std::polar(1.0, alpha);
            CHECK(damping_model_based(q1 * r, 1e-3 * r, basis).D == doctest::Approx(Dmb).epsilon(1e-12));
            CHECK(damping_model_free(q1 * r, 1e-3 * r, w) == doctest::Approx(Dmf).epsilon(1e-12));
        }
}

TEST_CASE("dense model-free and model-based estimates agree") {
    const auto m = pinned_beam(5);
    const auto xs = equidistant_positions(40, 1.0, Boundary::PinnedPinned);
    const auto basis = make_basis(m, xs, {0, 1, 2, 3, 4});
    SensorLayout layout{xs, Quadrature::Trapezoidal, {0.0, 1.0}};
    Eigen::VectorXcd eta(5);
    eta << cdouble(0, -1.0), cdouble(0.05, 0.02), cdouble(0.1, -0.2), 0.0, cdouble(-0.01, 0.03);
    const Eigen::VectorXcd q1 = basis.Phi_sens.cast<cdouble>() * eta;
    const double Dmb = damping_model_based(q1, 1e-3, basis).D;
    const double Dmf = damping_model_free(q1, 1e-3, quadrature_weights(layout, 1.0));
    CHECK(Dmf == doctest::Approx(Dmb).epsilon(0.01));
}

TEST_CASE("mass-normalized shape removes amplitude and phase") {
    Eigen::MatrixXcd v(2, 3);
    v << 0.0, cdouble(0.3, 0.1), 0.02, 0.0, cdouble(-0.5, 0.0), cdouble(0.0, 0.01);
    const double a = 4e-3, theta = -1.2;
    const Eigen::MatrixXcd q = v * (a * std::polar(1.0, theta));
    CHECK((mass_normalized_shape(q, a, theta) - v).norm() < 1e-15);
    CHECK_THROWS_AS(mass_normalized_shape(q, 0.0, theta), Error);
}

TEST_CASE("phase resonance check measures the quadrature offset") {
    CHECK(std::abs(check_phase_resonance(cdouble(0, -2.0), 1.0)) < 1e-15);
    const cdouble rot = std::polar(1.0, 2.5);
    CHECK(std::abs(check_phase_resonance(cdouble(0, -2.0) * rot, rot)) < 1e-12);
    CHECK(check_phase_resonance(1.0, 1.0) == doctest::Approx(0.5 * kPi));
    CHECK(check_phase_resonance(std::polar(1.0, -0.5 * kPi - 0.1), 1.0) == doctest::Approx(-0.1));
    CHECK(code_of([] { check_phase_resonance(0.0, 1.0); }) == ErrorCode::IndeterminatePhase);
}

TEST_CASE("identify_backbone rotates to the base gauge and skips unlocked levels") {
    const auto m = pinned_beam();
    const auto xs = equidistant_positions(5, 1.0, Boundary::PinnedPinned);
    TestRecord rec;
    rec.sensor_positions = xs;
    for (int k = 0; k < 3; ++k) {
        const double qb = 1e-3 * (k + 1);
        const cdouble base = std::polar(qb, 0.7 * k);
        LevelRecord lv;
        lv.level = qb;
        lv.Omega = m.omega()(0);
        lv.locked = k != 1;
        lv.qb_hat = base;
        lv.sensors.Omega = lv.Omega;
        lv.sensors.H = 3;
        lv.sensors.coeffs = Eigen::MatrixXcd::Zero(5, 4);
        // harmonic h carries phase h * arg(base)
        lv.sensors.coeffs.col(1) = single_mode_response(m, xs, qb) * std::polar(1.0, 0.7 * k);
        lv.sensors.coeffs.col(3) = 0.01 * single_mode_response(m, xs, qb) * std::polar(1.0, 2.1 * k);
        rec.levels.push_back(lv);
    }
    IdentificationSetup setup;
    setup.basis_modes = {0};
    setup.plot_channel = 2;
    const auto bb = identify_backbone(rec, m, setup);
    REQUIRE(bb.points.size() == 2);
    for (const auto& p : bb.points) {
        CHECK(p.D == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(p.a == doctest::Approx(m.gamma()(0) * p.qb_hat / 0.02).epsilon(1e-12));
        CHECK(p.theta == doctest::Approx(-0.5 * kPi).epsilon(1e-12));
        CHECK(p.amp_plot == doctest::Approx(p.a * std::abs(m.shape(0, xs[2]))).epsilon(1e-12));
        CHECK(std::abs(p.v(2, 1) - m.shape(0, xs[2])) < 1e-12);
        CHECK(std::abs(p.v(2, 3) - 0.01 * m.shape(0, xs[2])) < 1e-12);
    }
    setup.method = Method::ForceBased;
    CHECK(code_of([&] { identify_backbone(rec, m, setup); }) == ErrorCode::InvalidArgument);
}
