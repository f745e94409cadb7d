#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "nlmodal/nmrom.hpp"
#include "nlmodal/numerics.hpp"
#include "support.hpp"

using namespace nlmodal;

namespace {

constexpr double kW0 = 10.0;
constexpr double kD = 0.01;

double duffing_omega(double a) { return kW0 * std::sqrt(1.0 + 0.75 * a * a); }

ModalOscillatorTable make_table(bool duffing, int n = 60) {
    ModalOscillatorTable t;
    for (int k = 0; k < n; ++k) {
        const double a = 1e-3 * std::pow(1e3, static_cast<double>(k) / (n - 1));
        t.a.push_back(a);
        t.omega.push_back(duffing ? duffing_omega(a) : kW0);
        t.D.push_back(kD);
        t.force_factor.push_back(1.0);
    }
    return t;
}

// Amplitudes solving |omega(a)^2 - W^2 + 2 i D omega(a) W| a = W^2 qb by a fine scan.
std::vector<double> oracle_roots(double W, double qb) {
    auto f = [&](double a) {
        const double w = duffing_omega(a);
        return std::abs(cdouble(w * w - W * W, 2 * kD * w * W)) * a - W * W * qb;
    };
    std::vector<double> roots;
    const int n = 200000;
    double prev_a = 1e-3, prev = f(prev_a);
    for (int k = 1; k <= n; ++k) {
        const double a = 1e-3 * std::pow(1e3, static_cast<double>(k) / n);
        const double cur = f(a);
        if ((prev < 0) != (cur < 0)) {
            double lo = prev_a, hi = a;
            for (int i = 0; i < 100; ++i) {
                const double mid = 0.5 * (lo + hi);
                if ((f(lo) < 0) == (f(mid) < 0)) lo = mid;
                else hi = mid;
            }
            roots.push_back(0.5 * (lo + hi));
        }
        prev_a = a;
        prev = cur;
    }
    return roots;
}

struct Crossing {
    double a;
    std::size_t index;
};

// Points where the ordered curve passes through Omega = W, interpolated in a.
std::vector<Crossing> crossings(const ForcedResponse& fr, double W) {
    std::vector<Crossing> out;
    for (std::size_t k = 1; k < fr.points.size(); ++k) {
        const auto& p = fr.points[k - 1];
        const auto& q = fr.points[k];
        if ((p.Omega < W) != (q.Omega < W)) {
            const double t = (W - p.Omega) / (q.Omega - p.Omega);
            out.push_back({p.a + t * (q.a - p.a), std::abs(p.Omega - W) < std::abs(q.Omega - W) ? k - 1 : k});
        }
    }
    return out;
}

Eigen::Vector2d integrate_slow_flow(const TableInterpolant& t, const BaseLevel& lv, double W,
                                    Eigen::Vector2d s, double T) {
    const double dt = 0.01;
    auto f = [&](const Eigen::Vector2d& x) { return slow_flow(t, lv, W, x(0), x(1)); };
    for (double time = 0.0; time < T; time += dt) {
        const Eigen::Vector2d k1 = f(s), k2 = f(s + 0.5 * dt * k1), k3 = f(s + 0.5 * dt * k2), k4 = f(s + dt * k3);
        s += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return s;
}

}  // namespace

TEST_CASE("linear table reproduces the closed-form response") {
    const TableInterpolant t(make_table(false));
    const BaseLevel lv{1e-4, LevelKind::BaseDisplacement};
    const auto fr = solve_forced_response(t, lv, 8.0, 12.0);
    REQUIRE(fr.points.size() > 50);
    CHECK(fr.peak_found);
    for (const auto& p : fr.points) {
        const double exact = p.Omega * p.Omega * 1e-4 / std::abs(cdouble(kW0 * kW0 - p.Omega * p.Omega, 2 * kD * kW0 * p.Omega));
        CHECK(p.a == doctest::Approx(exact).epsilon(1e-8));
        CHECK(p.stability == Stability::Stable);
        CHECK(forced_residual(t, lv, p) < 1e-8);
    }
}

TEST_CASE("hardening table has three responses inside the overhang") {
    const TableInterpolant t(make_table(true));
    const BaseLevel lv{0.01, LevelKind::BaseDisplacement};
    const double W = 10.6;
    const auto roots = oracle_roots(W, 0.01);
    REQUIRE(roots.size() == 3);
    const auto fr = solve_forced_response(t, lv, 8.0, 13.0, {400});
    const auto cross = crossings(fr, W);
    REQUIRE(cross.size() == 3);
    std::vector<double> found{cross[0].a, cross[1].a, cross[2].a};
    std::sort(found.begin(), found.end());
    for (int k = 0; k < 3; ++k) CHECK(found[k] == doctest::Approx(roots[k]).epsilon(2e-3));

    for (const auto& c : cross) {
        const auto st = fr.points[c.index].stability;
        if (std::abs(c.a - roots[1]) < 1e-2 * roots[1]) CHECK(st == Stability::Unstable);
        else CHECK(st == Stability::Stable);
    }
    for (const auto& p : fr.points) CHECK(forced_residual(t, lv, p) < 1e-8);
}

TEST_CASE("slow flow settles on the stable responses and leaves the unstable one") {
    const TableInterpolant t(make_table(true));
    const BaseLevel lv{0.01, LevelKind::BaseDisplacement};
    const double W = 10.6;
    const auto roots = oracle_roots(W, 0.01);
    REQUIRE(roots.size() == 3);
    auto phase_of = [&](double a) {
        const double w = duffing_omega(a);
        return -std::arg(cdouble(w * w - W * W, 2 * kD * w * W));
    };
    for (int k : {0, 2}) {
        const Eigen::Vector2d s0(roots[k] * 1.03, phase_of(roots[k]) + 0.03);
        const Eigen::Vector2d s = integrate_slow_flow(t, lv, W, s0, 400.0);
        CHECK(s(0) == doctest::Approx(roots[k]).epsilon(1e-4));
    }
    const Eigen::Vector2d s0(roots[1] * 1.01, phase_of(roots[1]));
    const Eigen::Vector2d s = integrate_slow_flow(t, lv, W, s0, 400.0);
    CHECK(std::abs(s(0) - roots[1]) > 0.05 * roots[1]);
}

TEST_CASE("phase-quadrature response lies on the backbone and is stable") {
    const TableInterpolant t(make_table(true));
    const BaseLevel lv{0.01, LevelKind::BaseDisplacement};
    const auto q = response_at_phase(t, lv, -0.5 * kPi);
    CHECK(q.Omega == doctest::Approx(t(q.a).omega).epsilon(1e-12));
    CHECK(q.Omega == doctest::Approx(duffing_omega(q.a)).epsilon(1e-3));
    CHECK(q.stability == Stability::Stable);
    CHECK(forced_residual(t, lv, q) < 1e-8);
    // at quadrature the damping force balances the excitation
    CHECK(2 * kD * q.Omega * q.Omega * q.a == doctest::Approx(q.Omega * q.Omega * 0.01).epsilon(1e-8));
}

TEST_CASE("response peak sits on the backbone and is grid independent") {
    const TableInterpolant t(make_table(true));
    const BaseLevel lv{0.01, LevelKind::BaseDisplacement};
    const auto coarse = solve_forced_response(t, lv, 8.0, 13.0, {100});
    const auto fine = solve_forced_response(t, lv, 8.0, 13.0, {800});
    REQUIRE(coarse.peak_found);
    REQUIRE(fine.peak_found);
    CHECK(fine.a_peak == doctest::Approx(coarse.a_peak).epsilon(5e-3));
    CHECK(fine.Omega_peak == doctest::Approx(coarse.Omega_peak).epsilon(5e-3));
    CHECK(fine.Omega_peak == doctest::Approx(duffing_omega(fine.a_peak)).epsilon(1e-3));
    CHECK_FALSE(fine.truncated);
    double amax = 0.0;
    for (const auto& p : fine.points) amax = std::max(amax, p.a);
    CHECK(fine.a_peak == doctest::Approx(amax).epsilon(1e-6));
}

TEST_CASE("curve that leaves the table is flagged as truncated") {
    const TableInterpolant t(make_table(true));
    const auto fr = solve_forced_response(t, {1.0, LevelKind::BaseDisplacement}, 8.0, 13.0);
    CHECK(fr.truncated);
}

TEST_CASE("table interpolation is exact at nodes and for linear data") {
    ModalOscillatorTable tab = make_table(true, 12);
    for (std::size_t k = 0; k < tab.a.size(); ++k) tab.D[k] = 0.01 + 0.5 * tab.a[k];
    tab.v1 = Eigen::MatrixXcd::Zero(12, 2);
    for (int k = 0; k < 12; ++k) tab.v1(k, 0) = cdouble(tab.a[k], 1.0);
    const TableInterpolant t(tab);
    for (std::size_t k = 0; k < tab.a.size(); ++k) {
        const auto p = t(tab.a[k]);
        CHECK(p.omega == doctest::Approx(tab.omega[k]).epsilon(1e-14));
        CHECK(p.D == doctest::Approx(tab.D[k]).epsilon(1e-14));
    }
    const double a = 0.3;
    CHECK(t(a).D == doctest::Approx(0.01 + 0.5 * a).epsilon(1e-12));
    CHECK(std::abs(t(a).v1(0) - cdouble(a, 1.0)) < 1e-12);
    CHECK(t(a).omega == doctest::Approx(duffing_omega(a)).epsilon(1e-3));

    ErrorCode code = ErrorCode::Io;
    try {
        t(2.0);
    } catch (const Error& e) {
        code = e.code();
    }
    CHECK(code == ErrorCode::OutOfRange);
    CHECK_THROWS_AS(t(1e-4), Error);
}

TEST_CASE("invalid tables are rejected") {
    ModalOscillatorTable tab = make_table(false, 5);
    tab.a[2] = tab.a[1];
    CHECK_THROWS_AS(tab.validate(), Error);
    tab = make_table(false, 5);
    tab.D.pop_back();
    CHECK_THROWS_AS(TableInterpolant{tab}, Error);
}

TEST_CASE("reference tables carry the modal participation") {
    HbmProblem p{test::linear_cantilever(3)};
    p.continuation.a_start = 1e-4;
    p.continuation.a_end = 1e-2;
    const auto ref = continue_backbone(p);
    const auto tab = table_from_reference(ref, p.model);
    REQUIRE(tab.a.size() == ref.points.size());
    for (std::size_t k = 0; k < tab.a.size(); ++k) {
        CHECK(tab.force_factor[k] == doctest::Approx(std::abs(p.model.gamma()(0))).epsilon(1e-9));
        CHECK(tab.D[k] == doctest::Approx(0.01).epsilon(1e-9));
    }
}

TEST_CASE("velocity-level response matches the closed form") {
    const TableInterpolant t(make_table(false));
    const BaseLevel lv{1e-3, LevelKind::BaseVelocity};
    const auto fr = solve_forced_response(t, lv, 8.0, 12.0);
    REQUIRE(fr.peak_found);
    for (const auto& p : fr.points) {
        const double exact = p.Omega * 1e-3 / std::abs(cdouble(kW0 * kW0 - p.Omega * p.Omega, 2 * kD * kW0 * p.Omega));
        CHECK(p.a == doctest::Approx(exact).epsilon(1e-8));
    }
    // velocity-normalized peak is exactly at the natural frequency
    CHECK(fr.Omega_peak == doctest::Approx(kW0).epsilon(1e-6));
}
