#include "nlmodal/nmrom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

// pchip.hpp in Boost 1.74 calls isnan unqualified.
using std::isnan;
#include <boost/math/interpolators/pchip.hpp>

#include "nlmodal/error.hpp"
#include "nlmodal/numerics.hpp"

namespace nlmodal {

void ModalOscillatorTable::validate() const {
    require(a.size() >= 2, "modal table needs at least two amplitudes");
    require(omega.size() == a.size() && D.size() == a.size() && force_factor.size() == a.size(),
            "modal table columns differ in length");
    require(v1.rows() == 0 || v1.rows() == static_cast<Eigen::Index>(a.size()),
            "modal table shape rows differ from the amplitude grid");
    for (std::size_t k = 0; k < a.size(); ++k) {
        require(a[k] > 0.0 && std::isfinite(a[k]), "modal table amplitudes must be positive");
        if (k > 0) require(a[k] > a[k - 1], "modal table amplitudes must increase strictly");
        require(omega[k] > 0.0 && std::isfinite(D[k]) && force_factor[k] >= 0.0,
                "modal table holds invalid properties");
    }
}

namespace {

// Sorts rows by amplitude and drops repeated amplitudes (second sweep direction).
template <class Get>
ModalOscillatorTable build_table(std::size_t n, Get get, int shape_cols) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return get(i).a < get(j).a; });
    ModalOscillatorTable t;
    std::vector<Eigen::VectorXcd> shapes;
    for (std::size_t i : order) {
        const ModalProperties p = get(i).props;
        const double a = get(i).a;
        if (!t.a.empty() && a <= t.a.back() * (1.0 + 1e-12)) continue;
        t.a.push_back(a);
        t.omega.push_back(p.omega);
        t.D.push_back(p.D);
        t.force_factor.push_back(p.force_factor);
        shapes.push_back(p.v1);
    }
    t.v1.resize(static_cast<Eigen::Index>(shapes.size()), shape_cols);
    for (std::size_t k = 0; k < shapes.size(); ++k) t.v1.row(static_cast<Eigen::Index>(k)) = shapes[k].transpose();
    t.validate();
    return t;
}

struct Row {
    double a;
    ModalProperties props;
};

}  // namespace

ModalOscillatorTable table_from_backbone(const IdentifiedBackbone& backbone) {
    const auto& pts = backbone.points;
    require(pts.size() >= 2, "identified backbone has fewer than two points");
    const int cols = static_cast<int>(pts.front().v.rows());
    return build_table(pts.size(), [&](std::size_t i) {
        const auto& p = pts[i];
        return Row{p.a, {p.omega, p.D, p.force_factor, p.v.cols() > 1 ? Eigen::VectorXcd(p.v.col(1)) : Eigen::VectorXcd::Zero(cols)}};
    }, cols);
}

ModalOscillatorTable table_from_reference(const BackboneReference& ref, const ModalBeamModel& model) {
    const auto& pts = ref.points;
    require(pts.size() >= 2, "backbone reference has fewer than two points");
    const Eigen::VectorXcd gamma = model.gamma().cast<cdouble>();
    return build_table(pts.size(), [&](std::size_t i) {
        const auto& p = pts[i];
        const Eigen::VectorXcd v1 = p.vhat.row(1).transpose();
        return Row{p.a, {p.omega, p.D, std::abs(v1.dot(gamma)), v1}};
    }, model.nmod());
}

struct TableInterpolant::Impl {
    using Pchip = boost::math::interpolators::pchip<std::vector<double>>;
    std::vector<Pchip> cubic;  // omega, D, force factor (empty: linear)
};

TableInterpolant::TableInterpolant(ModalOscillatorTable table) : table_(std::move(table)) {
    table_.validate();
    auto impl = std::make_shared<Impl>();
    if (table_.a.size() >= 4) {
        for (const auto* col : {&table_.omega, &table_.D, &table_.force_factor}) {
            std::vector<double> x = table_.a, y = *col;
            impl->cubic.emplace_back(std::move(x), std::move(y));
        }
    }
    impl_ = std::move(impl);
}

bool TableInterpolant::contains(double a) const {
    return a >= table_.a.front() && a <= table_.a.back();
}

ModalProperties TableInterpolant::operator()(double a) const {
    if (!(std::isfinite(a) && contains(a)))
        fail(ErrorCode::OutOfRange, "amplitude outside the modal table range");
    const auto& xs = table_.a;
    std::size_t k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), a) - xs.begin());
    k = std::clamp<std::size_t>(k, 1, xs.size() - 1);
    const double t = (a - xs[k - 1]) / (xs[k] - xs[k - 1]);
    auto lin = [&](const std::vector<double>& y) { return y[k - 1] + t * (y[k] - y[k - 1]); };

    ModalProperties p;
    if (!impl_->cubic.empty()) {
        p.omega = impl_->cubic[0](a);
        p.D = impl_->cubic[1](a);
        p.force_factor = impl_->cubic[2](a);
    } else {
        p.omega = lin(table_.omega);
        p.D = lin(table_.D);
        p.force_factor = lin(table_.force_factor);
    }
    if (table_.v1.rows() > 0) {
        const auto i0 = static_cast<Eigen::Index>(k - 1), i1 = static_cast<Eigen::Index>(k);
        p.v1 = ((1.0 - t) * table_.v1.row(i0) + t * table_.v1.row(i1)).transpose();
    }
    return p;
}

ModalProperties interpolate(const ModalOscillatorTable& table, double a) {
    return TableInterpolant(table)(a);
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "stable";
        case Stability::Unstable: return "unstable";
        case Stability::Marginal: return "marginal";
    }
    return "?";
}

double BaseLevel::force(double Omega, double force_factor) const {
    return kind == LevelKind::BaseDisplacement ? Omega * Omega * force_factor * value
                                               : Omega * force_factor * value;
}

Eigen::Vector2d slow_flow(const TableInterpolant& table, const BaseLevel& level, double Omega,
                          double a, double theta) {
    const ModalProperties p = table(a);
    const double F = level.force(Omega, p.force_factor);
    Eigen::Vector2d rate;
    rate(0) = -p.D * p.omega * a - F * std::sin(theta) / (2.0 * Omega);
    rate(1) = ((p.omega * p.omega - Omega * Omega) * a - F * std::cos(theta)) / (2.0 * Omega * a);
    return rate;
}

double forced_residual(const TableInterpolant& table, const BaseLevel& level,
                       const ForcedResponsePoint& p) {
    const ModalProperties m = table(p.a);
    const double F = level.force(p.Omega, m.force_factor);
    const cdouble dyn(m.omega * m.omega - p.Omega * p.Omega, 2.0 * m.D * m.omega * p.Omega);
    return std::abs(dyn * p.a - F * std::polar(1.0, -p.theta)) / (m.omega * m.omega * p.a);
}

Stability classify_stability(const ForcedResponsePoint& point, const TableInterpolant& table,
                             const BaseLevel& level) {
    const double a = point.a;
    const double lo = table.table().a_min(), hi = table.table().a_max();
    const double h = 1e-5 * a;
    const double ap = std::min(a + h, hi), am = std::max(a - h, lo);
    const double ht = 1e-6;
    Eigen::Matrix2d J;
    J.col(0) = (slow_flow(table, level, point.Omega, ap, point.theta) -
                slow_flow(table, level, point.Omega, am, point.theta)) / (ap - am);
    J.col(1) = (slow_flow(table, level, point.Omega, a, point.theta + ht) -
                slow_flow(table, level, point.Omega, a, point.theta - ht)) / (2.0 * ht);
    // Scale the amplitude row so both states are in comparable units.
    J(0, 1) /= a;
    J(1, 0) *= a;
    const double tr = J.trace(), det = J.determinant();
    if (std::abs(det) <= 1e-6 * J.squaredNorm()) return Stability::Marginal;
    return tr < 0.0 && det > 0.0 ? Stability::Stable : Stability::Unstable;
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

struct Roots {
    int count = 0;
    double s[2] = {0.0, 0.0};  // ascending
    double discriminant = 0.0;
    bool lower_exists = false;  // true when the smaller root belongs to the lower branch
};

// Positive roots in s = Omega^2 of the squared amplitude relation at amplitude a.
Roots frequency_roots(const ModalProperties& p, const BaseLevel& level, double a) {
    const double w2 = p.omega * p.omega;
    const double g = p.force_factor * level.value / a;
    double A, B;
    const double C = w2 * w2;
    if (level.kind == LevelKind::BaseDisplacement) {
        A = 1.0 - g * g;
        B = -2.0 * w2 + 4.0 * p.D * p.D * w2;
    } else {
        A = 1.0;
        B = -2.0 * w2 + 4.0 * p.D * p.D * w2 - g * g;
    }
    Roots r;
    r.discriminant = B * B - 4.0 * A * C;
    if (std::abs(A) < 1e-14) {
        if (B < 0.0) { r.count = 1; r.s[0] = -C / B; }
        return r;
    }
    if (r.discriminant < 0.0) return r;
    const double sq = std::sqrt(r.discriminant);
    // Stable quadratic formula.
    const double qq = -0.5 * (B + (B < 0.0 ? -sq : sq));
    double s1 = qq / A, s2 = C / qq;
    if (s1 > s2) std::swap(s1, s2);
    if (A > 0.0) {
        if (s1 > 0.0) r.s[r.count++] = s1;
        if (s2 > 0.0) r.s[r.count++] = s2;
        r.lower_exists = r.count == 2;
    } else {
        if (s2 > 0.0) r.s[r.count++] = s2;
    }
    return r;
}

}  // namespace

ForcedResponse solve_forced_response(const TableInterpolant& table, const BaseLevel& level,
                                     double Omega_min, double Omega_max,
                                     const ForcedResponseOptions& options) {
    require(level.value > 0.0, "forced response: excitation level must be positive");
    require(Omega_min > 0.0 && Omega_max > Omega_min, "forced response: invalid frequency range");
    require(options.samples >= 10, "forced response: too few samples");
    const double a_lo = table.table().a_min(), a_hi = table.table().a_max();
    auto disc = [&](double a) { return frequency_roots(table(a), level, a).discriminant; };

    // Amplitude grid with refinement next to every merge of the two branches.
    const int n = options.samples;
    std::vector<double> grid(n);
    for (int k = 0; k < n; ++k) grid[k] = a_lo * std::pow(a_hi / a_lo, static_cast<double>(k) / (n - 1));
    grid.back() = a_hi;
    ForcedResponse out;
    std::vector<double> merges;
    for (int k = 1; k < n; ++k) {
        const double d0 = disc(grid[k - 1]), d1 = disc(grid[k]);
        if ((d0 >= 0.0) != (d1 >= 0.0)) {
            const double am = bisect([&](double la) { return disc(std::exp(la)); }, std::log(grid[k - 1]),
                                     std::log(grid[k]), 1e-14);
            merges.push_back(std::exp(am));
        }
    }
    for (double am : merges)
        for (int e = 1; e <= 10; ++e)
            for (double s : {-1.0, 1.0}) {
                const double a = am * (1.0 + s * std::pow(10.0, -e));
                if (a > a_lo && a < a_hi) grid.push_back(a);
            }
    grid.insert(grid.end(), merges.begin(), merges.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<ForcedResponsePoint> lower, upper;
    auto make = [&](double a, double s, const ModalProperties& p) {
        ForcedResponsePoint q;
        q.a = a;
        q.Omega = std::sqrt(s);
        q.theta = -std::arg(cdouble(p.omega * p.omega - s, 2.0 * p.D * p.omega * q.Omega));
        q.level = level.value;
        q.stability = classify_stability(q, table, level);
        return q;
    };
    for (double a : grid) {
        const ModalProperties p = table(a);
        Roots r = frequency_roots(p, level, a);
        if (r.discriminant < 0.0) {
            // merge point within round-off: keep the double root
            const bool disp = level.kind == LevelKind::BaseDisplacement;
            const double g = p.force_factor * level.value / a;
            const double A = disp ? 1.0 - g * g : 1.0;
            const double B = -2.0 * p.omega * p.omega + 4.0 * p.D * p.D * p.omega * p.omega - (disp ? 0.0 : g * g);
            if (A > 0.0 && B < 0.0 && r.discriminant > -64.0 * kEps * B * B) {
                r.count = 2;
                r.s[0] = r.s[1] = -B / (2.0 * A);
                r.lower_exists = true;
            }
        }
        if (r.count == 2) {
            lower.push_back(make(a, r.s[0], p));
            upper.push_back(make(a, r.s[1], p));
        } else if (r.count == 1) {
            upper.push_back(make(a, r.s[0], p));
        }
    }
    for (const auto& q : lower)
        if (q.Omega >= Omega_min && q.Omega <= Omega_max) out.points.push_back(q);
    for (auto it = upper.rbegin(); it != upper.rend(); ++it)
        if (it->Omega >= Omega_min && it->Omega <= Omega_max) out.points.push_back(*it);

    if (!merges.empty()) {
        out.peak_found = true;
        out.a_peak = merges.back();
        const ModalProperties p = table(out.a_peak);
        const Roots r = frequency_roots(p, level, out.a_peak * (1.0 - 1e-10));
        out.Omega_peak = r.count == 2 ? std::sqrt(0.5 * (r.s[0] + r.s[1])) : std::sqrt(r.s[0]);
    }
    // The curve leaves the table when it has not closed below a_max or still lies inside
    // the frequency window at a_min.
    const Roots first = frequency_roots(table(a_lo), level, a_lo);
    bool open_low = false;
    for (int i = 0; i < first.count; ++i) {
        const double Om = std::sqrt(first.s[i]);
        open_low = open_low || (Om >= Omega_min && Om <= Omega_max);
    }
    out.truncated = !out.peak_found || open_low;
    return out;
}

ForcedResponsePoint response_at_phase(const TableInterpolant& table, const BaseLevel& level,
                                      double theta) {
    require(theta > -kPi && theta < 0.0, "response_at_phase: theta must lie in (-pi, 0)");
    require(level.value > 0.0, "response_at_phase: excitation level must be positive");
    const double cot = std::cos(theta) / std::sin(theta);
    auto freq = [&](const ModalProperties& p) {
        const double dw = p.D * p.omega * cot;
        return dw + std::sqrt(dw * dw + p.omega * p.omega);
    };
    auto mismatch = [&](double a) {
        const ModalProperties p = table(a);
        const double Om = freq(p);
        const double dyn = std::abs(cdouble(p.omega * p.omega - Om * Om, 2.0 * p.D * p.omega * Om));
        return (dyn * a - level.force(Om, p.force_factor)) / (p.omega * p.omega * a);
    };
    const double a_lo = table.table().a_min(), a_hi = table.table().a_max();
    const int n = 400;
    double prev_a = a_lo, prev = mismatch(a_lo);
    for (int k = 1; k < n; ++k) {
        const double a = k == n - 1 ? a_hi : a_lo * std::pow(a_hi / a_lo, static_cast<double>(k) / (n - 1));
        const double cur = mismatch(a);
        if ((prev <= 0.0) != (cur <= 0.0)) {
            const double la = bisect([&](double x) { return mismatch(std::exp(x)); }, std::log(prev_a),
                                     std::log(a), 1e-15);
            ForcedResponsePoint q;
            q.a = std::exp(la);
            q.theta = theta;
            q.Omega = freq(table(q.a));
            q.level = level.value;
            q.stability = classify_stability(q, table, level);
            return q;
        }
        prev_a = a;
        prev = cur;
    }
    fail(ErrorCode::NoResponse, "no response with the requested phase inside the table range");
}

}  // namespace nlmodal
