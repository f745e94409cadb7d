#include "nlmodal/hbm_epmc.hpp"

#include <cmath>
#include <sstream>

#include "nlmodal/error.hpp"
#include "nlmodal/numerics.hpp"

namespace nlmodal {

void HbmProblem::validate() const {
    require(H >= 1, "HbmProblem: H must be at least 1");
    require(Ntime >= 4 * H + 1, "HbmProblem: Ntime must be at least 4H+1");
    require(mode >= 0 && mode < model.nmod(), "HbmProblem: tracked mode out of range");
    require(continuation.a_start > 0.0, "HbmProblem: a_start must be positive");
    require(continuation.a_start < continuation.a_end, "HbmProblem: a_start must be below a_end");
    require(continuation.min_step > 0.0 && continuation.min_step <= continuation.initial_step &&
                continuation.initial_step <= continuation.max_step,
            "HbmProblem: inconsistent step sizes");
}

// ---------------------------------------------------------------------------
// AFT
// ---------------------------------------------------------------------------

AftEvaluator::AftEvaluator(const ModalBeamModel& model, int H, int N)
    : model_(&model), tf_(H, N) {}

AftEvaluator::Result AftEvaluator::evaluate(const Eigen::VectorXd& coeffs,
                                            bool with_jacobian) const {
    const int nb = real_block_size(tf_.H());
    const int n = model_->nmod();
    require(coeffs.size() == n * nb, "AftEvaluator: coefficient vector has wrong length");
    if (!coeffs.allFinite()) fail(ErrorCode::NonFinite, "AFT: non-finite coefficients");
    if (std::holds_alternative<Jenkins>(model_->nonlinearity())) {
        return jenkins(coeffs, with_jacobian, nullptr);
    }
    if (std::holds_alternative<BendingStretching>(model_->nonlinearity())) {
        return stretching(coeffs, with_jacobian);
    }
    Result r;
    r.force = Eigen::VectorXd::Zero(n * nb);
    if (with_jacobian) r.jacobian = Eigen::MatrixXd::Zero(n * nb, n * nb);
    return r;
}

Eigen::VectorXd AftEvaluator::jenkins_force_samples(const Eigen::VectorXd& coeffs) const {
    Eigen::VectorXd samples;
    jenkins(coeffs, false, &samples);
    return samples;
}

AftEvaluator::Result AftEvaluator::jenkins(const Eigen::VectorXd& coeffs, bool with_jacobian,
                                           Eigen::VectorXd* samples) const {
    const auto& el = std::get<Jenkins>(model_->nonlinearity());
    const Eigen::VectorXd& phi = model_->contact_shapes();
    const int nb = real_block_size(tf_.H());
    const int n = model_->nmod();
    const int N = tf_.N();

    Eigen::VectorXd wc = Eigen::VectorXd::Zero(nb);
    for (int j = 0; j < n; ++j) wc += phi(j) * coeffs.segment(j * nb, nb);
    const Eigen::VectorXd w = tf_.synthesis() * wc;

    // Start stuck with the slider at the mean displacement; a cycle that never slips
    // then carries no mean force.
    double f = el.kt * (w(0) - wc(0));
    Eigen::RowVectorXd df;
    if (with_jacobian) df = Eigen::RowVectorXd::Constant(N, -el.kt / N);
    if (std::abs(f) > el.muN) {
        f = std::copysign(el.muN, f);
        if (with_jacobian) df.setZero();
    } else if (with_jacobian) {
        df(0) += el.kt;
    }

    Eigen::VectorXd fper(N);
    Eigen::MatrixXd dper;
    if (with_jacobian) dper.resize(N, N);
    int periods = 0;
    double start_value = f;
    bool periodic = false;
    while (periods < kMaxHysteresisPeriods) {
        fper(0) = f;
        if (with_jacobian) dper.row(0) = df;
        for (int k = 1; k <= N; ++k) {
            const int idx = k % N;
            const int prev = k - 1;
            const double trial = f + el.kt * (w(idx) - w(prev));
            if (std::abs(trial) > el.muN) {
                f = std::copysign(el.muN, trial);
                if (with_jacobian) df.setZero();
            } else {
                f = trial;
                if (with_jacobian) {
                    df(idx) += el.kt;
                    df(prev) -= el.kt;
                }
            }
            if (k < N) {
                fper(k) = f;
                if (with_jacobian) dper.row(k) = df;
            }
        }
        ++periods;
        const bool same = std::abs(f - start_value) <= 1e-13 * el.muN;
        start_value = f;
        if (same && periods >= 2) {
            periodic = true;
            break;
        }
    }
    if (!periodic) {
        fail(ErrorCode::NoConvergence, "AFT: hysteretic state did not periodize");
    }
    if (samples) *samples = fper;

    Result r;
    r.periods = periods;
    const Eigen::VectorXd fc = tf_.analysis() * fper;
    r.force.resize(n * nb);
    for (int j = 0; j < n; ++j) r.force.segment(j * nb, nb) = phi(j) * fc;
    if (with_jacobian) {
        const Eigen::MatrixXd dfc = tf_.analysis() * dper * tf_.synthesis();
        r.jacobian.resize(n * nb, n * nb);
        for (int j = 0; j < n; ++j) {
            for (int k = 0; k < n; ++k) {
                r.jacobian.block(j * nb, k * nb, nb, nb) = phi(j) * phi(k) * dfc;
            }
        }
    }
    return r;
}

AftEvaluator::Result AftEvaluator::stretching(const Eigen::VectorXd& coeffs,
                                              bool with_jacobian) const {
    const double c = std::get<BendingStretching>(model_->nonlinearity()).EA_over_2L;
    const Eigen::MatrixXd& K = model_->stretching_matrix();
    const int nb = real_block_size(tf_.H());
    const int n = model_->nmod();
    const int N = tf_.N();

    const Eigen::Map<const Eigen::MatrixXd> C(coeffs.data(), nb, n);
    const Eigen::MatrixXd X = tf_.synthesis() * C;  // N x n
    Eigen::MatrixXd G(N, n);
    Result r;
    if (with_jacobian) r.jacobian = Eigen::MatrixXd::Zero(n * nb, n * nb);
    Eigen::MatrixXd outer(nb, nb);
    for (int t = 0; t < N; ++t) {
        const Eigen::VectorXd e = X.row(t).transpose();
        const Eigen::VectorXd Ke = K * e;
        const double s = e.dot(Ke);
        G.row(t) = (c * s * Ke).transpose();
        if (with_jacobian) {
            const Eigen::MatrixXd Jt = c * (s * K + 2.0 * Ke * Ke.transpose());
            outer.noalias() = tf_.analysis().col(t) * tf_.synthesis().row(t);
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k) r.jacobian.block(j * nb, k * nb, nb, nb) += Jt(j, k) * outer;
        }
    }
    const Eigen::MatrixXd Gc = tf_.analysis() * G;  // nb x n
    r.force = Eigen::Map<const Eigen::VectorXd>(Gc.data(), nb * n);
    r.periods = 1;
    return r;
}

Spectrum aft_force(const Spectrum& eta, const HbmProblem& problem) {
    const int n = problem.model.nmod();
    require(eta.channels() == n, "aft_force: one channel per modal coordinate expected");
    require(eta.H == problem.H, "aft_force: harmonic order mismatch");
    const int nb = real_block_size(problem.H);
    Eigen::VectorXd coeffs(n * nb);
    for (int j = 0; j < n; ++j) {
        coeffs.segment(j * nb, nb) = complex_to_real(eta.coeffs.row(j).transpose(), problem.H);
    }
    const AftEvaluator aft(problem.model, problem.H, problem.Ntime);
    const auto r = aft.evaluate(coeffs, false);
    Spectrum out;
    out.Omega = eta.Omega;
    out.H = problem.H;
    out.coeffs.resize(n, problem.H + 1);
    out.residual_rms.setZero(n);
    for (int j = 0; j < n; ++j) {
        out.coeffs.row(j) = real_to_complex(r.force.segment(j * nb, nb), problem.H).transpose();
    }
    return out;
}

// ---------------------------------------------------------------------------
// EPMC
// ---------------------------------------------------------------------------

EpmcSystem::EpmcSystem(const HbmProblem& problem, int anchor)
    : problem_(&problem),
      aft_(problem.model, problem.H, problem.Ntime),
      anchor_(anchor),
      omega_ref_(problem.model.omega()(problem.mode)) {
    require(anchor >= 0 && anchor < problem.model.nmod(), "EpmcSystem: anchor out of range");
}

int EpmcSystem::size() const {
    return problem_->model.nmod() * real_block_size(problem_->H) + 2;
}

Eigen::VectorXd EpmcSystem::residual(const Eigen::VectorXd& y, double a) const {
    return residual(y, a, nullptr);
}

Eigen::VectorXd EpmcSystem::residual(const Eigen::VectorXd& y, double a,
                                     Eigen::MatrixXd* jac) const {
    const auto& model = problem_->model;
    const int H = problem_->H;
    const int nb = real_block_size(H);
    const int n = model.nmod();
    const int nh = n * nb;
    require(y.size() == nh + 2, "epmc_residual: unknown vector has wrong length");
    require(a > 0.0, "epmc_residual: amplitude must be positive");

    const Eigen::VectorXd xi = y.head(nh);
    const double Om = y(nh) * omega_ref_;
    const double D = y(nh + 1);
    const double s2 = 1.0 / (omega_ref_ * omega_ref_);
    const Eigen::VectorXd& w = model.omega();
    const Eigen::VectorXd zeta = model.zeta();

    const auto nl = aft_.evaluate(a * xi, jac != nullptr);
    Eigen::VectorXd R(nh + 2);
    R.head(nh) = nl.force / a;
    if (jac) {
        jac->setZero(nh + 2, nh + 2);
        jac->topLeftCorner(nh, nh) = nl.jacobian;
    }
    for (int j = 0; j < n; ++j) {
        const int o = j * nb;
        const double wj2 = w(j) * w(j);
        const double cd_lin = 2.0 * zeta(j) * w(j);
        R(o) += wj2 * xi(o);
        if (jac) (*jac)(o, o) += wj2;
        for (int h = 1; h <= H; ++h) {
            const int ic = o + 2 * h - 1, is = o + 2 * h;
            const double k = wj2 - h * h * Om * Om;
            const double cd = (cd_lin - 2.0 * D * Om) * h * Om;
            R(ic) += k * xi(ic) + cd * xi(is);
            R(is) += k * xi(is) - cd * xi(ic);
            if (jac) {
                auto& J = *jac;
                J(ic, ic) += k;
                J(ic, is) += cd;
                J(is, is) += k;
                J(is, ic) -= cd;
                const double dk = -2.0 * h * h * Om;
                const double dcd = (cd_lin - 4.0 * D * Om) * h;
                J(ic, nh) += omega_ref_ * (dk * xi(ic) + dcd * xi(is));
                J(is, nh) += omega_ref_ * (dk * xi(is) - dcd * xi(ic));
                const double dcdD = -2.0 * Om * h * Om;
                J(ic, nh + 1) += dcdD * xi(is);
                J(is, nh + 1) -= dcdD * xi(ic);
            }
        }
    }
    R.head(nh) *= s2;
    if (jac) jac->topRows(nh) *= s2;

    double amp2 = 0.0;
    for (int j = 0; j < n; ++j) {
        const int o = j * nb;
        amp2 += xi(o + 1) * xi(o + 1) + xi(o + 2) * xi(o + 2);
        if (jac) {
            (*jac)(nh, o + 1) = 2.0 * xi(o + 1);
            (*jac)(nh, o + 2) = 2.0 * xi(o + 2);
        }
    }
    R(nh) = amp2 - 1.0;
    R(nh + 1) = xi(anchor_ * nb + 2);
    if (jac) (*jac)(nh + 1, anchor_ * nb + 2) = 1.0;
    if (!R.allFinite()) fail(ErrorCode::NonFinite, "epmc_residual: non-finite residual");
    return R;
}

namespace {

struct LinearMode {
    Eigen::VectorXd shape;
    double omega;
    double D;
};

LinearMode small_amplitude_mode(const HbmProblem& problem) {
    const auto& model = problem.model;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(model.tangent_stiffness_at_rest());
    Eigen::VectorXd u = es.eigenvectors().col(problem.mode);
    Eigen::Index imax;
    u.cwiseAbs().maxCoeff(&imax);
    if (u(imax) < 0) u = -u;
    const Eigen::VectorXd c = 2.0 * model.zeta().cwiseProduct(model.omega());
    const double om = std::sqrt(es.eigenvalues()(problem.mode));
    return {u, om, u.dot(c.cwiseProduct(u)) / (2.0 * om)};
}

}  // namespace

int default_anchor(const HbmProblem& problem) {
    const auto m = small_amplitude_mode(problem);
    Eigen::Index imax;
    m.shape.cwiseAbs().maxCoeff(&imax);
    return static_cast<int>(imax);
}

Eigen::VectorXd EpmcSystem::initial_guess() const {
    const int nb = real_block_size(problem_->H);
    const int n = problem_->model.nmod();
    const auto m = small_amplitude_mode(*problem_);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(n * nb + 2);
    for (int j = 0; j < n; ++j) y(j * nb + 1) = m.shape(j);
    y(n * nb) = m.omega / omega_ref_;
    y(n * nb + 1) = m.D;
    return y;
}

BackbonePoint EpmcSystem::to_point(const Eigen::VectorXd& y, double a) const {
    const int H = problem_->H;
    const int nb = real_block_size(H);
    const int n = problem_->model.nmod();
    BackbonePoint p;
    p.a = a;
    p.omega = y(n * nb) * omega_ref_;
    p.D = y(n * nb + 1);
    p.vhat.resize(H + 1, n);
    for (int j = 0; j < n; ++j) p.vhat.col(j) = real_to_complex(y.segment(j * nb, nb), H);
    return p;
}

Eigen::VectorXd EpmcSystem::from_point(const BackbonePoint& p) const {
    const int H = problem_->H;
    const int nb = real_block_size(H);
    const int n = problem_->model.nmod();
    require(p.vhat.rows() == H + 1 && p.vhat.cols() == n, "backbone point does not match the problem");
    Eigen::VectorXd y(n * nb + 2);
    for (int j = 0; j < n; ++j) y.segment(j * nb, nb) = complex_to_real(p.vhat.col(j), H);
    y(n * nb) = p.omega / omega_ref_;
    y(n * nb + 1) = p.D;
    return y;
}

Eigen::VectorXd epmc_residual(const Eigen::VectorXd& unknowns, const HbmProblem& problem,
                              double a) {
    const EpmcSystem sys(problem, default_anchor(problem));
    return sys.residual(unknowns, a);
}

namespace {

struct NewtonOutcome {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
};

NewtonOutcome newton(const EpmcSystem& sys, Eigen::VectorXd& y, double a, double tol,
                     int max_iter) {
    NewtonOutcome out;
    Eigen::MatrixXd J;
    try {
        for (int it = 0; it <= max_iter; ++it) {
            const Eigen::VectorXd R = sys.residual(y, a, &J);
            out.residual = R.lpNorm<Eigen::Infinity>();
            out.iterations = it;
            if (out.residual < tol) {
                out.converged = true;
                return out;
            }
            if (it == max_iter) break;
            const Eigen::VectorXd dy = J.partialPivLu().solve(-R);
            if (!dy.allFinite()) break;
            y += dy;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFinite && e.code() != ErrorCode::NoConvergence) throw;
    }
    return out;
}

}  // namespace

BackboneReference continue_backbone(const HbmProblem& problem) {
    problem.validate();
    const EpmcSystem sys(problem, default_anchor(problem));
    const auto& cs = problem.continuation;
    const double p_end = std::log10(cs.a_end);
    BackboneReference ref;

    double p = std::log10(cs.a_start);
    Eigen::VectorXd y = sys.initial_guess();
    auto first = newton(sys, y, cs.a_start, problem.newton_tol, 4 * problem.max_newton);
    if (!first.converged) {
        ref.message = "no converged solution at a_start";
        return ref;
    }
    ref.points.push_back(sys.to_point(y, cs.a_start));
    ref.diagnostics.push_back({first.residual, first.iterations});

    Eigen::VectorXd y_prev;
    double p_prev = p;
    double step = cs.initial_step;
    while (p < p_end - 1e-12) {
        const double dp = std::min(step, p_end - p);
        Eigen::VectorXd guess = y;
        if (y_prev.size() == y.size()) guess += (y - y_prev) * (dp / (p - p_prev));
        const double a = std::pow(10.0, p + dp);
        auto out = newton(sys, guess, a, problem.newton_tol, problem.max_newton);
        if (!out.converged) {
            step *= 0.5;
            if (step < cs.min_step) {
                std::ostringstream msg;
                msg << "continuation stalled at a = " << std::pow(10.0, p);
                ref.message = msg.str();
                return ref;
            }
            continue;
        }
        y_prev = y;
        p_prev = p;
        y = guess;
        p += dp;
        ref.points.push_back(sys.to_point(y, a));
        ref.diagnostics.push_back({out.residual, out.iterations});
        if (out.iterations <= 3) step = std::min(1.5 * step, cs.max_step);
    }
    ref.complete = true;
    return ref;
}

BackbonePoint solve_backbone_point(const HbmProblem& problem, double a, const BackbonePoint& near) {
    problem.validate();
    require(a > 0.0, "solve_backbone_point: amplitude must be positive");
    const EpmcSystem sys(problem, default_anchor(problem));
    Eigen::VectorXd y = sys.from_point(near);
    const auto out = newton(sys, y, a, problem.newton_tol, 4 * problem.max_newton);
    if (!out.converged) {
        std::ostringstream msg;
        msg << "no converged backbone point at a = " << a;
        fail(ErrorCode::NoConvergence, msg.str());
    }
    return sys.to_point(y, a);
}

BackbonePoint backbone_point_at_deflection(const HbmProblem& problem, const BackboneReference& ref,
                                           double x, double target) {
    require(ref.points.size() >= 2, "backbone reference needs at least two points");
    const auto& pts = ref.points;
    std::vector<double> defl(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) defl[i] = std::abs(deflection_fundamental(problem.model, pts[i], x));
    for (std::size_t i = 1; i < pts.size(); ++i) {
        const double lo = std::min(defl[i - 1], defl[i]), hi = std::max(defl[i - 1], defl[i]);
        if (target < lo || target > hi) continue;
        if (target == defl[i - 1]) return pts[i - 1];
        if (target == defl[i]) return pts[i];
        BackbonePoint last = pts[i - 1];
        auto f = [&](double la) {
            last = solve_backbone_point(problem, std::exp(la), last);
            return std::abs(deflection_fundamental(problem.model, last, x)) - target;
        };
        const double la = bisect(f, std::log(pts[i - 1].a), std::log(pts[i].a), 1e-10);
        return solve_backbone_point(problem, std::exp(la), last);
    }
    fail(ErrorCode::OutOfRange, "deflection target outside the backbone range");
}

double fundamental_power_damping(const HbmProblem& problem, const BackbonePoint& p) {
    const auto& model = problem.model;
    const int n = model.nmod();
    Spectrum eta;
    eta.Omega = p.omega;
    eta.H = problem.H;
    eta.coeffs = (p.a * p.vhat).transpose();
    eta.residual_rms.setZero(n);
    const Spectrum g = aft_force(eta, problem);
    const Eigen::VectorXd zeta = model.zeta();
    double power = 0.0;
    double amp2 = 0.0;
    for (int j = 0; j < n; ++j) {
        const cdouble q = eta.coeffs(j, 1);
        const cdouble vel = cdouble(0.0, p.omega) * q;
        const cdouble force = 2.0 * zeta(j) * model.omega()(j) * vel + g.coeffs(j, 1);
        power += 0.5 * std::real(std::conj(vel) * force);
        amp2 += std::norm(q);
    }
    return power / (std::pow(p.omega, 3) * amp2);
}

cdouble deflection_fundamental(const ModalBeamModel& model, const BackbonePoint& p, double x) {
    const Eigen::VectorXd phi = model.shapes_at(x);
    cdouble s = 0.0;
    for (int j = 0; j < model.nmod(); ++j) s += phi(j) * p.vhat(1, j);
    return p.a * s;
}

}  // namespace nlmodal
