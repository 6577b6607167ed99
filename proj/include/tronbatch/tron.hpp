#pragma once

#include <chrono>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "tronbatch/dense.hpp"

namespace tronbatch {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised when an objective/derivative evaluation feeds a non-finite value
/// into the step computation.
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Anything that can evaluate f, its gradient and its (dense symmetric) Hessian
// over a box. Bounds may contain +-inf sentinels for absent bounds.
template <typename P>
concept BoundedProblem = requires(const P& p, const Vector& x) {
    { p.dim() } -> std::convertible_to<int>;
    { p.lower() } -> std::convertible_to<Vector>;
    { p.upper() } -> std::convertible_to<Vector>;
    { p.eval_f(x) } -> std::convertible_to<double>;
    { p.eval_grad(x) } -> std::convertible_to<Vector>;
    { p.eval_hess(x) } -> std::convertible_to<DenseMatrix>;
};

// Type-erased problem bundle, handy for tests and one-off problems.
struct FunctionProblem {
    int n = 0;
    Vector l, u;
    std::function<double(const Vector&)> f;
    std::function<Vector(const Vector&)> grad;
    std::function<DenseMatrix(const Vector&)> hess;

    int dim() const { return n; }
    const Vector& lower() const { return l; }
    const Vector& upper() const { return u; }
    double eval_f(const Vector& x) const { return f(x); }
    Vector eval_grad(const Vector& x) const { return grad(x); }
    DenseMatrix eval_hess(const Vector& x) const { return hess(x); }
};

struct TronConfig {
    double tol_pg = 1e-6;              // convergence: ||projected gradient||_inf
    std::optional<double> delta0;      // initial radius; default max(||grad f(x0)||_2, 1)
    int max_iter = 200;
    double cg_tol = 0.1;               // relative residual tolerance for CG
    // trust-region update constants
    double eta0 = 1e-4;
    double sigma1 = 0.25;
    double sigma2 = 0.5;
    double sigma3 = 4.0;
    // Cauchy / projected-search constants
    double mu0 = 1e-2;
    double mu1 = 1.0;
    double interp_factor = 0.5;
    double delta_max = 1e10;

    void validate() const {
        if (!(tol_pg > 0.0)) throw std::invalid_argument("TronConfig: tol_pg must be > 0");
        if (delta0 && !(*delta0 > 0.0)) throw std::invalid_argument("TronConfig: delta0 must be > 0");
        if (!(0.0 < sigma1 && sigma1 < sigma2 && sigma2 < 1.0 && 1.0 < sigma3))
            throw std::invalid_argument("TronConfig: need 0 < sigma1 < sigma2 < 1 < sigma3");
        if (!(0.0 < eta0 && eta0 < 1.0)) throw std::invalid_argument("TronConfig: need 0 < eta0 < 1");
        if (!(0.0 < mu0 && mu0 < 1.0)) throw std::invalid_argument("TronConfig: need 0 < mu0 < 1");
        if (!(0.0 < interp_factor && interp_factor < 1.0))
            throw std::invalid_argument("TronConfig: need 0 < interp_factor < 1");
        if (max_iter < 1) throw std::invalid_argument("TronConfig: max_iter must be >= 1");
    }
};

enum class SolveStatus { Converged, IterLimit, FactorizationFailed };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "Converged";
        case SolveStatus::IterLimit: return "IterLimit";
        case SolveStatus::FactorizationFailed: return "FactorizationFailed";
    }
    return "?";
}

struct SolveReport {
    Vector x_star;
    double f_star = 0.0;
    double pg_norm = 0.0;
    SolveStatus status = SolveStatus::IterLimit;
    int iterations = 0;
    long cg_iterations = 0;
    long f_evals = 0;
    double wall_time = 0.0;  // seconds
};

inline Vector clip(Vector x, const Vector& l, const Vector& u) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::min(std::max(x[i], l[i]), u[i]);
    return x;
}

// Component i of the projected gradient is g_i in the interior, min(g_i, 0) at
// the lower bound and max(g_i, 0) at the upper bound. Returns the inf-norm.
inline double projected_gradient_norm(const Vector& x, const Vector& g, const Vector& l, const Vector& u) {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double pg = g[i];
        if (x[i] <= l[i]) pg = std::min(g[i], 0.0);
        else if (x[i] >= u[i]) pg = std::max(g[i], 0.0);
        norm = std::max(norm, std::abs(pg));
    }
    return norm;
}

template <BoundedProblem P>
double projected_gradient_norm(const P& p, const Vector& x) {
    return projected_gradient_norm(x, p.eval_grad(x), p.lower(), p.upper());
}

// s = P[x + alpha*w] - x
inline Vector gpstep(const Vector& x, double alpha, const Vector& w, const Vector& l, const Vector& u) {
    Vector s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double trial = x[i] + alpha * w[i];
        if (trial < l[i]) s[i] = l[i] - x[i];
        else if (trial > u[i]) s[i] = u[i] - x[i];
        else s[i] = alpha * w[i];
    }
    return s;
}

struct BreakpointInfo {
    int count = 0;
    double min = 0.0;
    double max = 0.0;
};

// Distances along the ray x + t*w at which components hit their bounds.
inline BreakpointInfo breakpt(const Vector& x, const Vector& w, const Vector& l, const Vector& u) {
    BreakpointInfo info;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double brpt;
        if (x[i] < u[i] && w[i] > 0.0) brpt = (u[i] - x[i]) / w[i];
        else if (x[i] > l[i] && w[i] < 0.0) brpt = (l[i] - x[i]) / w[i];
        else continue;
        if (!std::isfinite(brpt)) continue;
        if (info.count == 0) {
            info.min = info.max = brpt;
        } else {
            info.min = std::min(info.min, brpt);
            info.max = std::max(info.max, brpt);
        }
        ++info.count;
    }
    return info;
}

// Nonnegative root of ||x + sigma*w||_2 = delta, assuming ||x|| <= delta.
inline double trqsol(const Vector& x, const Vector& w, double delta) {
    const double ptx = dot(w, x);
    const double ptp = dot(w, w);
    if (ptp == 0.0) throw std::invalid_argument("trqsol: direction is zero, no intersection");
    const double xtx = dot(x, x);
    const double dsq = delta * delta;
    const double rad = std::sqrt(std::max(ptx * ptx + ptp * std::max(dsq - xtx, 0.0), 0.0));
    if (ptx > 0.0) return (dsq - xtx) / (ptx + rad);
    return (rad - ptx) / ptp;
}

struct CauchyStep {
    double alpha = 1.0;
    Vector s;
};

namespace detail {

inline double quad_model(const DenseMatrix& A, const Vector& g, const Vector& s) {
    Vector as = gemv(1.0, A, s, 0.0, Vector(s.size(), 0.0));
    return dot(g, s) + 0.5 * dot(s, as);
}

inline double checked_quad_model(const DenseMatrix& A, const Vector& g, const Vector& s) {
    const double q = quad_model(A, g, s);
    if (!std::isfinite(q)) throw EvaluationError("cauchy: non-finite quadratic model value");
    return q;
}

}  // namespace detail

// Cauchy step s = P[x - alpha*g] - x satisfying q(s) <= mu0*g's and
// ||s|| <= mu1*delta. alpha_start carries the previous step size across
// iterations as a warm start.
inline CauchyStep cauchy(const Vector& x, const Vector& g, const DenseMatrix& A, const Vector& l,
                         const Vector& u, double delta, const TronConfig& cfg, double alpha_start = 1.0) {
    const double radius = cfg.mu1 * delta;
    const double extrap_factor = 1.0 / cfg.interp_factor;
    double alpha = alpha_start;

    Vector minus_g = scal(-1.0, g);
    const BreakpointInfo brpt = breakpt(x, minus_g, l, u);

    Vector s = gpstep(x, -alpha, g, l, u);
    bool interpolate;
    if (nrm2(s) > radius) {
        interpolate = true;
    } else {
        const double q = detail::checked_quad_model(A, g, s);
        interpolate = q >= cfg.mu0 * dot(g, s);
    }

    if (interpolate) {
        bool search = true;
        while (search && alpha > 1e-30) {
            alpha *= cfg.interp_factor;
            s = gpstep(x, -alpha, g, l, u);
            if (nrm2(s) <= radius) {
                const double q = detail::checked_quad_model(A, g, s);
                search = q >= cfg.mu0 * dot(g, s);
            }
        }
    } else {
        double alpha_good = alpha;
        bool search = true;
        while (search && alpha <= brpt.max) {
            alpha *= extrap_factor;
            s = gpstep(x, -alpha, g, l, u);
            if (nrm2(s) <= radius) {
                const double q = detail::checked_quad_model(A, g, s);
                if (q < cfg.mu0 * dot(g, s)) {
                    alpha_good = alpha;
                } else {
                    search = false;
                }
            } else {
                search = false;
            }
        }
        alpha = alpha_good;
        s = gpstep(x, -alpha, g, l, u);
    }
    return {alpha, std::move(s)};
}

template <BoundedProblem P>
CauchyStep cauchy(const P& p, const Vector& x, const Vector& g, const DenseMatrix& A, double delta,
                  const TronConfig& cfg = {}) {
    return cauchy(x, g, A, p.lower(), p.upper(), delta, cfg);
}

// Indices strictly inside their bounds, ascending.
inline std::vector<int> select_free_set(const Vector& x, const Vector& l, const Vector& u) {
    std::vector<int> free_set;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (l[i] < x[i] && x[i] < u[i]) free_set.push_back(static_cast<int>(i));
    return free_set;
}

enum class CgStatus { Converged, Boundary, NegCurve, IterCap };

inline const char* to_string(CgStatus s) {
    switch (s) {
        case CgStatus::Converged: return "Converged";
        case CgStatus::Boundary: return "Boundary";
        case CgStatus::NegCurve: return "NegCurve";
        case CgStatus::IterCap: return "IterCap";
    }
    return "?";
}

struct CgResult {
    Vector step;             // in original coordinates (L^T backsolve applied)
    CgStatus status = CgStatus::IterCap;
    int iterations = 0;
    double rel_residual = 0.0;
};

// Steihaug conjugate gradients on the preconditioned system
// (L^-1 A L^-T) s = -L^-1 g, trust region ||s|| <= delta measured in the
// preconditioned coordinates. Stops after dim(A) iterations, on the boundary,
// or on negative curvature. Products with the preconditioned matrix are the
// two triangular solves around a gemv.
inline CgResult precond_cg(const DenseMatrix& A, const Vector& g_free, const DenseMatrix& L,
                           double delta, const TronConfig& cfg = {}) {
    const int n = A.dim();
    if (static_cast<int>(g_free.size()) != n) throw std::invalid_argument("precond_cg: dimension mismatch");

    CgResult out;
    Vector w(n, 0.0);  // iterate in preconditioned coordinates
    Vector bhat = trtrs(L, scal(-1.0, g_free), false);
    const double bnorm = nrm2(bhat);
    if (bnorm == 0.0) {
        out.step = Vector(n, 0.0);
        out.status = CgStatus::Converged;
        return out;
    }

    Vector r = bhat;
    Vector p = r;
    double rho = dot(r, r);
    out.status = CgStatus::IterCap;
    for (int k = 1; k <= n; ++k) {
        out.iterations = k;
        Vector z = trtrs(L, p, true);
        Vector q = gemv(1.0, A, z, 0.0, Vector(n, 0.0));
        q = trtrs(L, std::move(q), false);
        const double ptq = dot(p, q);
        if (ptq <= 0.0) {
            const double sigma = trqsol(w, p, delta);
            w = axpy(sigma, p, std::move(w));
            out.status = CgStatus::NegCurve;
            break;
        }
        const double alpha = rho / ptq;
        const double sigma = trqsol(w, p, delta);
        if (alpha >= sigma) {
            w = axpy(sigma, p, std::move(w));
            out.status = CgStatus::Boundary;
            break;
        }
        w = axpy(alpha, p, std::move(w));
        r = axpy(-alpha, q, std::move(r));
        const double rtr = dot(r, r);
        if (std::sqrt(rtr) <= cfg.cg_tol * bnorm) {
            out.status = CgStatus::Converged;
            break;
        }
        p = axpy(1.0, r, scal(rtr / rho, std::move(p)));
        rho = rtr;
    }

    // true residual of the preconditioned system at exit
    Vector aw = trtrs(L, gemv(1.0, A, trtrs(L, w, true), 0.0, Vector(n, 0.0)), false);
    out.rel_residual = nrm2(axpy(-1.0, aw, bhat)) / bnorm;
    out.step = trtrs(L, std::move(w), true);
    return out;
}

struct LineSearchResult {
    double beta = 1.0;
    Vector x_next;
};

// Backtracking projected search: find beta in (0,1] with
// q(P[x + beta*w] - x) <= mu0 * g'(P[x + beta*w] - x). The quadratic is
// expected to decrease along the ray up to the full step, so beta starts at 1.
inline LineSearchResult projected_line_search(const Vector& x, const Vector& l, const Vector& u,
                                              const DenseMatrix& A, const Vector& g, const Vector& w,
                                              const TronConfig& cfg = {}) {
    constexpr double kBetaFloor = 1e-12;
    double beta = 1.0;
    const BreakpointInfo brpt = breakpt(x, w, l, u);

    bool search = true;
    while (search && beta > brpt.min && beta > kBetaFloor) {
        Vector s = gpstep(x, beta, w, l, u);
        const double q = detail::quad_model(A, g, s);
        if (q <= cfg.mu0 * dot(g, s)) search = false;
        else beta *= cfg.interp_factor;
    }
    // Force at least one more active constraint if the backtracking fell below
    // the first breakpoint without finding a full acceptable step.
    if (beta < 1.0 && beta < brpt.min) beta = brpt.min;

    Vector x_next = clip(axpy(beta, w, x), l, u);
    return {beta, std::move(x_next)};
}

template <BoundedProblem P>
LineSearchResult projected_line_search(const P& p, const Vector& x, const Vector& w,
                                       const TronConfig& cfg = {}) {
    return projected_line_search(x, p.lower(), p.upper(), p.eval_hess(x), p.eval_grad(x), w, cfg);
}

namespace detail {

struct SubspaceResult {
    Vector x;        // trial iterate
    Vector step;     // x - x_entry
    long cg_iterations = 0;
};

// Minor-iteration loop: starting from the Cauchy point, repeatedly optimize the
// quadratic over the current free set (preconditioned CG + projected search)
// until the reduced gradient test holds or the trust region blocks progress.
// At most n passes since each unconverged pass activates a bound.
inline SubspaceResult subspace_step(const Vector& x0, const Vector& g, const DenseMatrix& A,
                                    const Vector& l, const Vector& u, double delta,
                                    const TronConfig& cfg, const Vector& cauchy_s) {
    const int n = static_cast<int>(x0.size());
    SubspaceResult out;
    out.x = clip(axpy(1.0, cauchy_s, x0), l, u);
    Vector s(n);
    for (int i = 0; i < n; ++i) s[i] = out.x[i] - x0[i];
    Vector w = gemv(1.0, A, s, 0.0, Vector(n, 0.0));  // A*(x - x0)

    for (int faces = 0; faces < n; ++faces) {
        const std::vector<int> free_set = select_free_set(out.x, l, u);
        const int nf = static_cast<int>(free_set.size());
        if (nf == 0) break;

        DenseMatrix B(nf);
        for (int j = 0; j < nf; ++j)
            for (int i = 0; i < nf; ++i) B(i, j) = A(free_set[i], free_set[j]);
        const CholeskyResult chol = ccf(B);

        Vector gfree(nf), gorig(nf);
        for (int j = 0; j < nf; ++j) {
            gfree[j] = w[free_set[j]] + g[free_set[j]];
            gorig[j] = g[free_set[j]];
        }
        const double gfnorm = nrm2(gorig);

        const CgResult cg = precond_cg(B, gfree, chol.L, delta, cfg);
        out.cg_iterations += cg.iterations;

        Vector xf(nf), lf(nf), uf(nf);
        for (int j = 0; j < nf; ++j) {
            xf[j] = out.x[free_set[j]];
            lf[j] = l[free_set[j]];
            uf[j] = u[free_set[j]];
        }
        const LineSearchResult ls = projected_line_search(xf, lf, uf, B, gfree, cg.step, cfg);
        for (int j = 0; j < nf; ++j) {
            out.x[free_set[j]] = ls.x_next[j];
            s[free_set[j]] += ls.x_next[j] - xf[j];
        }
        w = gemv(1.0, A, s, 0.0, Vector(n, 0.0));

        double gfnormf = 0.0;
        for (int j = 0; j < nf; ++j) {
            const double t = w[free_set[j]] + g[free_set[j]];
            gfnormf += t * t;
        }
        if (std::sqrt(gfnormf) <= cfg.cg_tol * gfnorm) break;
        if (cg.status == CgStatus::Boundary || cg.status == CgStatus::IterCap) break;
    }
    out.step = std::move(s);
    return out;
}

}  // namespace detail

// Trust-region Newton solve of min f(x) over l <= x <= u. x0 is projected
// into the box before the first evaluation.
template <BoundedProblem P>
SolveReport solve(const P& p, Vector x0, const TronConfig& cfg = {}) {
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    cfg.validate();

    const int n = p.dim();
    const Vector l = p.lower();
    const Vector u = p.upper();
    if (static_cast<int>(x0.size()) != n || static_cast<int>(l.size()) != n ||
        static_cast<int>(u.size()) != n)
        throw std::invalid_argument("solve: dimension mismatch");
    for (int i = 0; i < n; ++i)
        if (!(l[i] <= u[i])) throw std::invalid_argument("solve: lower bound exceeds upper bound");

    // internal trust-region interpolation bands (between eta0 and full agreement)
    constexpr double kEta1 = 0.25;
    constexpr double kEta2 = 0.75;

    SolveReport rep;
    Vector x = clip(std::move(x0), l, u);
    double f = p.eval_f(x);
    rep.f_evals = 1;
    Vector g = p.eval_grad(x);
    double pg = projected_gradient_norm(x, g, l, u);
    double delta = cfg.delta0 ? *cfg.delta0 : std::max(nrm2(g), 1.0);
    double alpha_c = 1.0;

    DenseMatrix A;
    bool need_hessian = true;
    rep.status = pg <= cfg.tol_pg ? SolveStatus::Converged : SolveStatus::IterLimit;

    if (rep.status != SolveStatus::Converged) {
        for (int iter = 1; iter <= cfg.max_iter; ++iter) {
            rep.iterations = iter;
            if (need_hessian) {
                A = p.eval_hess(x);
                need_hessian = false;
            }

            CauchyStep cs = cauchy(x, g, A, l, u, delta, cfg, alpha_c);
            alpha_c = cs.alpha;

            detail::SubspaceResult sub;
            try {
                sub = detail::subspace_step(x, g, A, l, u, delta, cfg, cs.s);
            } catch (const FactorizationError&) {
                rep.status = SolveStatus::FactorizationFailed;
                break;
            }
            rep.cg_iterations += sub.cg_iterations;

            const Vector& s = sub.step;
            const double f_trial = p.eval_f(sub.x);
            ++rep.f_evals;

            const double gs = dot(g, s);
            const double prered = -(gs + 0.5 * dot(s, gemv(1.0, A, s, 0.0, Vector(n, 0.0))));
            const double actred = f - f_trial;
            const double snorm = nrm2(s);
            if (iter == 1) delta = std::min(delta, snorm);

            double alphax;
            if (f_trial - f - gs <= 0.0) alphax = cfg.sigma3;
            else alphax = std::max(cfg.sigma1, -0.5 * (gs / (f_trial - f - gs)));

            if (actred < cfg.eta0 * prered)
                delta = std::min(std::max(alphax, cfg.sigma1) * snorm, cfg.sigma2 * delta);
            else if (actred < kEta1 * prered)
                delta = std::max(cfg.sigma1 * delta, std::min(alphax * snorm, cfg.sigma2 * delta));
            else if (actred < kEta2 * prered)
                delta = std::max(cfg.sigma1 * delta, std::min(alphax * snorm, cfg.sigma3 * delta));
            else
                delta = std::max(delta, std::min(alphax * snorm, cfg.sigma3 * delta));
            delta = std::min(delta, cfg.delta_max);

            if (actred > cfg.eta0 * prered) {
                x = sub.x;
                f = f_trial;
                g = p.eval_grad(x);
                need_hessian = true;
                pg = projected_gradient_norm(x, g, l, u);
                if (pg <= cfg.tol_pg) {
                    rep.status = SolveStatus::Converged;
                    break;
                }
            }
            if (delta <= 1e-300) break;  // radius collapsed, no representable step left
        }
    }

    rep.x_star = std::move(x);
    rep.f_star = f;
    rep.pg_norm = pg;
    rep.wall_time = std::chrono::duration<double>(clock::now() - t0).count();
    return rep;
}

template <BoundedProblem P>
SolveReport solve(const P& p, const TronConfig& cfg = {}) {
    Vector x0 = clip(Vector(p.dim(), 0.0), p.lower(), p.upper());
    return solve(p, std::move(x0), cfg);
}

}  // namespace tronbatch
