#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "support/boxqp_oracle.hpp"
#include "support/test_util.hpp"
#include "tronbatch/batch.hpp"
#include "tronbatch/tron.hpp"

using namespace tronbatch;
using testutil::from_rows;
using Catch::Matchers::WithinAbs;

TEST_CASE("projected_gradient_norm") {
    const Vector l{0, 0}, u{10, 10};
    REQUIRE(projected_gradient_norm({1, 1}, {1, -2}, l, u) == 2.0);   // interior
    REQUIRE(projected_gradient_norm({0, 1}, {3, 0}, l, u) == 0.0);    // inward at lower bound
    REQUIRE(projected_gradient_norm({0, 1}, {-3, 0}, l, u) == 3.0);   // outward at lower bound
}

TEST_CASE("gpstep") {
    const Vector x{0, 0};
    REQUIRE(gpstep(x, 0.0, {1, 1}, {-1, -1}, {1, 1}) == Vector{0, 0});
    REQUIRE(gpstep(x, 2.0, {1, 1}, {-kInf, -kInf}, {1, 3}) == Vector{1, 2});
    REQUIRE(gpstep(x, 2.0, {1, 1}, {-kInf, -kInf}, {kInf, kInf}) == Vector{2, 2});
}

TEST_CASE("breakpt") {
    const auto a = breakpt({0, 0}, {1, 1}, {-kInf, -kInf}, {1, 2});
    REQUIRE(a.count == 2);
    REQUIRE(a.min == 1.0);
    REQUIRE(a.max == 2.0);

    const auto b = breakpt({0, 0}, {0, 0}, {-1, -1}, {1, 1});
    REQUIRE(b.count == 0);
    REQUIRE(b.min == 0.0);
    REQUIRE(b.max == 0.0);

    const auto c = breakpt({0}, {-1}, {-3}, {kInf});
    REQUIRE(c.count == 1);
    REQUIRE(c.min == 3.0);
    REQUIRE(c.max == 3.0);
}

TEST_CASE("trqsol") {
    REQUIRE_THAT(trqsol({0, 0}, {1, 0}, 2.0), WithinAbs(2.0, 1e-14));
    REQUIRE_THAT(trqsol({1, 0}, {1, 0}, 3.0), WithinAbs(2.0, 1e-14));
    // tangent-ish direction from the boundary keeps a nonnegative root
    REQUIRE(trqsol({2, 0}, {0, 1}, 2.0) >= 0.0);
    REQUIRE_THROWS_AS(trqsol({0, 0}, {0, 0}, 1.0), std::invalid_argument);
}

TEST_CASE("cauchy") {
    const TronConfig cfg;
    SECTION("stationary point gives zero step") {
        const Vector x{1, 1}, g{0, 0};
        const auto c = cauchy(x, g, DenseMatrix::identity(2), {-kInf, -kInf}, {kInf, kInf}, 1.0, cfg);
        REQUIRE(c.s == Vector{0, 0});
    }
    SECTION("descent on convex quadratic") {
        // f = x^2/2 at x=1: g=1, A=1
        const auto c = cauchy({1}, {1}, DenseMatrix::identity(1), {-kInf}, {kInf}, 100.0, cfg);
        const double q = dot(c.s, {1}) + 0.5 * c.s[0] * c.s[0];
        REQUIRE(c.alpha > 0.0);
        REQUIRE(q < 0.0);
    }
    SECTION("radius clamp") {
        const auto c = cauchy({1}, {1}, DenseMatrix::identity(1), {-kInf}, {kInf}, 0.1, cfg);
        REQUIRE(nrm2(c.s) <= cfg.mu1 * 0.1 + 1e-15);
    }
}

TEST_CASE("select_free_set") {
    REQUIRE(select_free_set({1, 1}, {0, 0}, {2, 2}) == std::vector<int>{0, 1});
    REQUIRE(select_free_set({0, 2}, {0, 0}, {2, 2}).empty());
    REQUIRE(select_free_set({0, 1}, {0, 0}, {2, 2}) == std::vector<int>{1});
}

TEST_CASE("precond_cg") {
    SECTION("perfect preconditioner converges in one iteration") {
        for (int trial = 0; trial < 20; ++trial) {
            const int n = 2 + trial % 16;
            const DenseMatrix a = testutil::random_spd(n);
            const auto chol = ccf(a);
            REQUIRE(chol.shift == 0.0);
            const Vector g = testutil::random_vector(n);
            const auto r = precond_cg(a, g, chol.L, 1e8, TronConfig{});
            REQUIRE(r.status == CgStatus::Converged);
            REQUIRE(r.iterations == 1);
            REQUIRE(r.rel_residual <= 1e-8);
            // step solves A s = -g
            const Vector as = gemv(1.0, a, r.step, 0.0, Vector(n, 0.0));
            REQUIRE(testutil::max_abs_diff(as, scal(-1.0, g)) <= 1e-8 * (1.0 + nrm2(g)));
        }
    }
    SECTION("zero right-hand side converges immediately") {
        const DenseMatrix a = testutil::random_spd(3);
        const auto chol = ccf(a);
        const auto r = precond_cg(a, Vector(3, 0.0), chol.L, 1.0, TronConfig{});
        REQUIRE(r.status == CgStatus::Converged);
        REQUIRE(r.iterations == 0);
        REQUIRE(r.step == Vector(3, 0.0));
    }
    SECTION("negative curvature stops on the boundary") {
        DenseMatrix a(1);
        a(0, 0) = -1.0;
        const auto chol = ccf(a);
        REQUIRE(chol.shift > 0.0);
        const double delta = 0.7;
        const auto r = precond_cg(a, {2.0}, chol.L, delta, TronConfig{});
        REQUIRE(r.status == CgStatus::NegCurve);
        // ||s|| = delta in the preconditioned norm ||L^T s||
        const Vector lts = gemv(1.0, chol.L, r.step, 0.0, Vector(1, 0.0), true);
        REQUIRE_THAT(nrm2(lts), WithinAbs(delta, 1e-12));
    }
}

TEST_CASE("projected_line_search") {
    const TronConfig cfg;
    SECTION("zero direction") {
        const auto r = projected_line_search({1, 1}, {0, 0}, {2, 2}, DenseMatrix::identity(2),
                                             {1, 1}, {0, 0}, cfg);
        REQUIRE(r.beta == 1.0);
        REQUIRE(r.x_next == Vector{1, 1});
    }
    SECTION("Newton step on unconstrained quadratic accepted at full length") {
        // q(s) = g's + s'As/2 with A=I, g=(1,2); Newton direction w=-g
        const Vector g{1, 2};
        const auto r = projected_line_search({0, 0}, {-kInf, -kInf}, {kInf, kInf},
                                             DenseMatrix::identity(2), g, {-1, -2}, cfg);
        REQUIRE(r.beta == 1.0);
        REQUIRE(r.x_next == Vector{-1, -2});
    }
    SECTION("step crossing a bound is clipped and still decreases the model") {
        const Vector x{0.5, 0.5}, g{-1, -1};
        const DenseMatrix a = DenseMatrix::identity(2);
        const Vector w{2.0, 0.2};  // first component would leave the box
        const auto r = projected_line_search(x, {0, 0}, {1, 1}, a, g, w, cfg);
        REQUIRE(r.x_next[0] == 1.0);
        REQUIRE(r.x_next[1] <= 1.0);
        Vector s(2);
        for (int i = 0; i < 2; ++i) s[i] = r.x_next[i] - x[i];
        const double q = dot(g, s) + 0.5 * dot(s, gemv(1.0, a, s, 0.0, Vector(2, 0.0)));
        REQUIRE(q <= cfg.mu0 * dot(g, s));
        REQUIRE(q < 0.0);
    }
}

TEST_CASE("free set fixed components survive the subspace pipeline") {
    // Cauchy point lands component 0 on its bound; the CG + line-search stage
    // must leave it untouched.
    const Vector x{0.2, 5.0}, l{0, 0}, u{10, 10};
    const Vector g{4.0, 1.0};
    const DenseMatrix a = DenseMatrix::identity(2);
    const TronConfig cfg;
    const auto cs = cauchy(x, g, a, l, u, 100.0, cfg);
    const Vector xc = clip(axpy(1.0, cs.s, x), l, u);
    REQUIRE(xc[0] == 0.0);
    const auto free_set = select_free_set(xc, l, u);
    REQUIRE(free_set == std::vector<int>{1});

    DenseMatrix b(1);
    b(0, 0) = a(1, 1);
    const auto chol = ccf(b);
    const Vector gf{g[1] + a(1, 1) * (xc[1] - x[1])};
    const auto cg = precond_cg(b, gf, chol.L, 100.0, cfg);
    const auto ls = projected_line_search({xc[1]}, {l[1]}, {u[1]}, b, gf, cg.step, cfg);
    // component 0 was never part of the subspace
    Vector x_next = xc;
    x_next[1] = ls.x_next[0];
    REQUIRE(x_next[0] == xc[0]);
    REQUIRE(x_next[1] != xc[1]);
}

TEST_CASE("solve: convex quadratic in at most two iterations") {
    const DenseMatrix h = testutil::random_spd(5, 0.5);
    tronbatch::FunctionProblem p = testutil::make_quadratic(h, Vector(5, 0.0), Vector(5, -kInf), Vector(5, kInf));
    const auto rep = solve(p, testutil::random_vector(5, -3.0, 3.0));
    REQUIRE(rep.status == SolveStatus::Converged);
    REQUIRE(rep.iterations <= 2);
    REQUIRE(testutil::max_abs_diff(rep.x_star, Vector(5, 0.0)) <= 1e-6);
}

TEST_CASE("solve: hs45 family n=3") {
    const Hs45Problem p = make_hs45(3);
    const auto rep = solve(p, Vector{0.5, 0.5, 0.5});
    REQUIRE(rep.status == SolveStatus::Converged);
    REQUIRE_THAT(rep.x_star[0], WithinAbs(1.0, 1e-6));
    REQUIRE_THAT(rep.x_star[1], WithinAbs(2.0, 1e-6));
    REQUIRE_THAT(rep.x_star[2], WithinAbs(3.0, 1e-6));
    REQUIRE_THAT(rep.f_star, WithinAbs(114.0, 1e-9));
    REQUIRE(rep.pg_norm <= 1e-6);
}

TEST_CASE("solve: random box QPs match the active-set oracle") {
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 4;
        const DenseMatrix h = testutil::random_spd(n, 0.5);
        Vector c = testutil::random_vector(n, -2.0, 2.0);
        Vector l(n), u(n);
        for (int i = 0; i < n; ++i) {
            l[i] = testutil::uniform(-1.0, 0.0);
            u[i] = l[i] + testutil::uniform(0.2, 1.5);
        }
        const auto p = testutil::make_quadratic(h, c, l, u);
        const auto rep = solve(p, testutil::random_vector(n, -1.0, 1.0));
        const Vector expect = testutil::boxqp_oracle(h, c, l, u);
        REQUIRE(rep.status == SolveStatus::Converged);
        REQUIRE(testutil::max_abs_diff(rep.x_star, expect) <= 1e-6);
    }
}

TEST_CASE("solve: feasibility and KKT invariants") {
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + trial % 4;
        const DenseMatrix h = testutil::random_spd(n, 0.3);
        const Vector c = testutil::random_vector(n, -2.0, 2.0);
        Vector l(n, -0.5), u(n, 0.5);
        const auto p = testutil::make_quadratic(h, c, l, u);
        // start outside the box on purpose: solve projects first
        const auto rep = solve(p, testutil::random_vector(n, -5.0, 5.0));
        for (int i = 0; i < n; ++i) {
            REQUIRE(rep.x_star[i] >= l[i]);
            REQUIRE(rep.x_star[i] <= u[i]);
        }
        if (rep.status == SolveStatus::Converged) {
            REQUIRE(projected_gradient_norm(rep.x_star, p.eval_grad(rep.x_star), l, u) <= 1e-6);
        }
    }
}

TEST_CASE("solve: objective decreases from the start") {
    const Hs45Problem p = make_hs45(6);
    const Vector x0 = p.default_start();
    const double f0 = p.eval_f(x0);
    const auto rep = solve(p, x0);
    REQUIRE(rep.status == SolveStatus::Converged);
    REQUIRE(rep.f_star < f0);
}

TEST_CASE("solve: iteration limit status") {
    const Hs45Problem p = make_hs45(8);
    TronConfig cfg;
    cfg.max_iter = 1;
    const auto rep = solve(p, p.default_start(), cfg);
    REQUIRE(rep.status == SolveStatus::IterLimit);
    REQUIRE(rep.iterations == 1);
}

TEST_CASE("solve: factorization failure surfaces as a status") {
    tronbatch::FunctionProblem p;
    p.n = 2;
    p.l = {-1, -1};
    p.u = {1, 1};
    p.f = [](const Vector& x) { return x[0] + 0.0 * x[1]; };
    p.grad = [](const Vector&) { return Vector{1.0, 0.0}; };
    p.hess = [](const Vector&) {
        DenseMatrix h(2);
        h(0, 0) = 1.0;
        h(1, 1) = std::numeric_limits<double>::quiet_NaN();
        return h;
    };
    const auto rep = solve(p, Vector{0.5, 0.5});
    REQUIRE(rep.status == SolveStatus::FactorizationFailed);
}

TEST_CASE("config validation") {
    TronConfig cfg;
    cfg.tol_pg = 0.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TronConfig{};
    cfg.sigma2 = 1.5;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = TronConfig{};
    cfg.eta0 = 1.0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
}
