#include "nlmodal/numerics.hpp"

#include <cmath>
#include <utility>

#include "nlmodal/error.hpp"

namespace nlmodal {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "invalid-argument";
        case ErrorCode::RootFinding: return "root-finding";
        case ErrorCode::NonFinite: return "non-finite";
        case ErrorCode::NoConvergence: return "no-convergence";
        case ErrorCode::RankDeficient: return "rank-deficient";
        case ErrorCode::NoResponse: return "no-response";
        case ErrorCode::IndeterminatePhase: return "indeterminate-phase";
        case ErrorCode::PllDivergence: return "pll-divergence";
        case ErrorCode::OutOfRange: return "out-of-range";
        case ErrorCode::Schema: return "schema";
        case ErrorCode::Io: return "io";
    }
    return "unknown";
}

namespace {

// P_n(x) and P_n'(x) via the three-term recurrence.
std::pair<double, double> legendre(int n, double x) {
    double p0 = 1.0, p1 = x;
    for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    return {p1, n * (x * p1 - p0) / (x * x - 1.0)};
}

}  // namespace

QuadratureRule gauss_legendre(int n, double a, double b) {
    require(n >= 1, "gauss_legendre: n must be positive");
    QuadratureRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    const double mid = 0.5 * (a + b);
    const double half = 0.5 * (b - a);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(n, x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre(n, x).second;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.nodes[i] = mid - half * x;
        rule.nodes[n - 1 - i] = mid + half * x;
        rule.weights[i] = half * w;
        rule.weights[n - 1 - i] = half * w;
    }
    return rule;
}

QuadratureRule composite_gauss(int panels, int order, double a, double b) {
    require(panels >= 1, "composite_gauss: panels must be positive");
    QuadratureRule out;
    const double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const auto r = gauss_legendre(order, a + p * h, a + (p + 1) * h);
        out.nodes.insert(out.nodes.end(), r.nodes.begin(), r.nodes.end());
        out.weights.insert(out.weights.end(), r.weights.begin(), r.weights.end());
    }
    return out;
}

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(rule.nodes[i]);
    return s;
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double tol,
              int max_iter) {
    double flo = f(lo);
    const double fhi = f(hi);
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    if ((flo > 0.0) == (fhi > 0.0)) {
        fail(ErrorCode::RootFinding, "bisect: bracket does not change sign");
    }
    for (int it = 0; it < max_iter && (hi - lo) > tol * std::max(1.0, std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

double wrap_angle(double phi) {
    phi = std::remainder(phi, 2.0 * kPi);
    if (phi <= -kPi) phi += 2.0 * kPi;
    return phi;
}

}  // namespace nlmodal
