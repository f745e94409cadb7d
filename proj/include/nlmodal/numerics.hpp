#pragma once

#include <functional>
#include <vector>

namespace nlmodal {

inline constexpr double kPi = 3.14159265358979323846;

/// Nodes and weights of an n-point Gauss-Legendre rule on [a, b].
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Composite Gauss-Legendre rule: `panels` equal panels with `order` points each.
QuadratureRule composite_gauss(int panels, int order, double a, double b);

double integrate(const QuadratureRule& rule, const std::function<double(double)>& f);

/// Bisection on a sign-changing bracket. Throws RootFinding if f(lo), f(hi) share a sign.
double bisect(const std::function<double(double)>& f, double lo, double hi, double tol,
              int max_iter = 200);

/// Maps an angle to (-pi, pi].
double wrap_angle(double phi);

}  // namespace nlmodal
