#include <gtest/gtest.h>

#include <cmath>

#include "fbsmp/adjoint.hpp"
#include "fbsmp/spike.hpp"
#include "test_support.hpp"

using namespace fbsmp;
using fbsmp::testing::m1;
using fbsmp::testing::mean_se;
using fbsmp::testing::v1;
using fbsmp::testing::zero_spec;

namespace {

double max_abs(const Panel& p) {
    double m = 0.0;
    for (double v : p.values()) m = std::max(m, std::abs(v));
    return m;
}

// Shared LQ solve at the default scale.
struct LqFixture {
    BenchmarkProblem bp = benchmark_lq();
    BrownianBundle bundle = sample_brownian(TimeGrid(1.0, 256), 10000, {1});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    FirstOrderAdjoint adj1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
    SecondOrderAdjoint adj2 = solve_second_order_adjoint(bp.spec, sol, adj1, bundle, {});

    static const LqFixture& get() {
        static const LqFixture f;
        return f;
    }
};

}  // namespace

TEST(FirstOrderAdjoint, VanishesWithoutStateCost) {
    ProblemSpec s = zero_spec("no_state_cost");
    s.b = [](double, const Vec&, double, double, const Vec& u) { return v1(u[0]); };
    s.sigma = [](double, const Vec&, double, double, const Vec&) { return v1(1.0); };
    s.g = [](double, const Vec&, double, double, const Vec& u) { return 0.5 * u[0] * u[0]; };
    s.phi = [](const Vec&) { return 3.0; };
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 500, {2});
    FbsdeSolution sol = solve_coupled_picard(s, ControlLaw::constant(v1(0.5)), bundle, {});
    FirstOrderAdjoint a = solve_first_order_adjoint(s, sol, bundle, {});
    EXPECT_EQ(max_abs(a.p), 0.0);
    EXPECT_EQ(max_abs(a.q), 0.0);
    EXPECT_EQ(max_abs(a.K1), 0.0);
}

TEST(FirstOrderAdjoint, LqMatchesRiccatiFeedback) {
    const auto& f = LqFixture::get();
    // P_Riccati = 1, so p = X.
    EXPECT_LE(sup_node_mean_abs(f.adj1.p, f.sol.X), 5e-2);
    EXPECT_EQ(f.adj1.margin, 1.0);
}

TEST(FirstOrderAdjoint, K1IdentityHoldsInOnePassWithoutZDependence) {
    const auto& f = LqFixture::get();
    EXPECT_LE(f.adj1.k1_identity, 1e-12);
    EXPECT_LE(f.adj1.max_inner, 2);
}

TEST(SecondOrderAdjoint, VanishesForLinearCoefficients) {
    BenchmarkProblem bp = benchmark_lq();
    ProblemSpec s = bp.spec;
    s.g = [](double, const Vec& x, double, double, const Vec& u) { return x[0] + 0.5 * u[0] * u[0]; };
    s.g_x = [](double, const Vec&, double, double, const Vec&) { return v1(1.0); };
    s.g_hess = [](double, const Vec&, double, double, const Vec&) { return Mat(Mat::Zero(3, 3)); };
    s.phi = [](const Vec& x) { return x[0]; };
    s.phi_x = [](const Vec&) { return v1(1.0); };
    s.phi_xx = [](const Vec&) { return m1(0.0); };
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 500, {3});
    FbsdeSolution sol = solve_coupled_picard(s, ControlLaw::constant(v1(0.0)), bundle, {});
    FirstOrderAdjoint a1 = solve_first_order_adjoint(s, sol, bundle, {});
    SecondOrderAdjoint a2 = solve_second_order_adjoint(s, sol, a1, bundle, {});
    EXPECT_EQ(max_abs(a2.P), 0.0);
    EXPECT_EQ(max_abs(a2.Q), 0.0);
    EXPECT_EQ(max_abs(a2.K2), 0.0);
}

TEST(SecondOrderAdjoint, LqMatchesIntegratedHessian) {
    // b_x = sigma_x = 0 and H_xx = g_xx = 1: dP = -dt + Q dB, P(T) = 1, so P(t) = 1 + T - t.
    const auto& f = LqFixture::get();
    const TimeGrid& g = f.bundle.grid;
    Panel oracle(g, f.bundle.M, 1);
    for (int m = 0; m < f.bundle.M; ++m)
        for (int i = 0; i <= g.N; ++i) oracle.at(m, i) = 1.0 + g.T - g.t(i);
    EXPECT_LE(sup_node_mean_abs(f.adj2.P, oracle), 5e-2);
}

TEST(SecondOrderAdjoint, SymmetricOnCoupledBenchmark) {
    BenchmarkProblem bp = benchmark_coupled_z();
    auto bundle = sample_brownian(TimeGrid(1.0, 64), 2000, {4});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    FirstOrderAdjoint a1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
    SecondOrderAdjoint a2 = solve_second_order_adjoint(bp.spec, sol, a1, bundle, {});
    EXPECT_LE(a2.max_asymmetry, 1e-10);
    // p = 1 and q = 0 solve the first-order equation here (see the benchmark comment).
    Panel ones(a1.p.grid(), a1.p.paths(), 1);
    std::fill(ones.values().begin(), ones.values().end(), 1.0);
    EXPECT_LE(sup_node_mean_abs(a1.p, ones), 1e-2);
}

TEST(Gamma, IdenticallyOneWithoutCoefficients) {
    const auto& f = LqFixture::get();
    GammaProcess g = solve_gamma(f.bp.spec, f.sol, f.adj1, f.bundle);
    for (double v : g.gamma.values()) EXPECT_EQ(v, 1.0);
}

TEST(Gamma, DriftlessExponentialIsMeanOneAndPositive) {
    const int M = 10000, N = 128;
    auto bundle = sample_brownian(TimeGrid(1.0, N), M, {5});
    Panel a(bundle.grid, M, 1), c(bundle.grid, M, 1);
    std::fill(c.values().begin(), c.values().end(), 0.6);
    GammaProcess g = stochastic_exponential(a, c, bundle);
    for (double v : g.gamma.values()) EXPECT_GT(v, 0.0);
    auto [mean, se] = mean_se(M, [&](int m) { return g.gamma.at(m, N); });
    EXPECT_NEAR(mean, 1.0, 3.0 * se);
    // Lognormal: log gamma_T = 0.6 B_T - 0.18 exactly on the grid.
    for (int m = 0; m < 5; ++m) EXPECT_NEAR(std::log(g.gamma.at(m, N)), 0.6 * bundle.value(m, N) - 0.18, 1e-12);
}

TEST(Gamma, StaysPositiveUnderLargeDiffusion) {
    auto bundle = sample_brownian(TimeGrid(1.0, 64), 500, {6});
    Panel a(bundle.grid, 500, 1), c(bundle.grid, 500, 1);
    std::fill(a.values().begin(), a.values().end(), -3.0);
    std::fill(c.values().begin(), c.values().end(), 4.0);
    GammaProcess g = stochastic_exponential(a, c, bundle);
    for (double v : g.gamma.values()) EXPECT_GT(v, 0.0);
}

namespace {

YhatSolution yhat_for(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& a1,
                      const SecondOrderAdjoint& a2, const BrownianBundle& bundle, const SpikeSpec& spike) {
    GammaProcess gamma = solve_gamma(spec, sol, a1, bundle);
    DeltaProcess delta = solve_delta(spec, sol, a1, spike, {});
    return solve_yhat(spec, sol, a1, a2, gamma, spike, delta, bundle, {2});
}

}  // namespace

TEST(Yhat, ZeroWhenSpikeEqualsReference) {
    BenchmarkProblem bp = benchmark_coupled_z();
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 300, {7});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    FirstOrderAdjoint a1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
    SecondOrderAdjoint a2 = solve_second_order_adjoint(bp.spec, sol, a1, bundle, {});
    YhatSolution y = yhat_for(bp.spec, sol, a1, a2, bundle, make_spike(bundle.grid, 0.25, 0.125, v1(-1.0)));
    EXPECT_EQ(max_abs(y.Yhat), 0.0);
    EXPECT_EQ(max_abs(y.Zhat), 0.0);
    EXPECT_EQ(y.y0_bsde.mean, 0.0);
    EXPECT_EQ(y.y0_gamma.mean, 0.0);
}

TEST(Yhat, CoupledZEstimatorsAgreeWithClosedForm) {
    // p = 1, q = 0, P = 0: the forcing on the window is dH = (u - ubar) + (u^2 - ubar^2)/2 = 1/2 for
    // u = 0, ubar = -1, discounted by e^{-t} (H_y = -1). So Yhat(0) = (e^{-t0} - e^{-t0-eps}) / 2.
    BenchmarkProblem bp = benchmark_coupled_z();
    auto bundle = sample_brownian(TimeGrid(1.0, 256), 10000, {8});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    FirstOrderAdjoint a1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
    SecondOrderAdjoint a2 = solve_second_order_adjoint(bp.spec, sol, a1, bundle, {});
    const double t0 = 0.25, eps = 1.0 / 16.0;
    YhatSolution y = yhat_for(bp.spec, sol, a1, a2, bundle, make_spike(bundle.grid, t0, eps, v1(0.0)));
    const double tol = 3.0 * std::hypot(y.y0_bsde.se, y.y0_gamma.se) + 1e-12;
    EXPECT_NEAR(y.y0_bsde.mean, y.y0_gamma.mean, tol);
    const double exact = 0.5 * (std::exp(-t0) - std::exp(-t0 - eps));
    // Discrete discount (1 + dt)^{-i} against e^{-t}: relative O(dt).
    EXPECT_NEAR(y.y0_gamma.mean, exact, 3.0 * y.y0_gamma.se + 2.0 / 256.0 * exact);
}

TEST(Yhat, LqOptimumGivesNonNegativeExpansion) {
    // ubar = -X and p = X: dH = (u + X)^2 / 2 on the window, with gamma = 1.
    // E(1 + X_t)^2 = (1 + e^{-t})^2 + sigma0^2 (1 - e^{-2t}) / 2 under dX = -X dt + sigma0 dB.
    const auto& f = LqFixture::get();
    const double t0 = 0.25, eps = 1.0 / 16.0, s0 = 0.2;
    YhatSolution y = yhat_for(f.bp.spec, f.sol, f.adj1, f.adj2, f.bundle, make_spike(f.bundle.grid, t0, eps, v1(1.0)));
    EXPECT_GE(y.y0_bsde.mean, -3.0 * y.y0_bsde.se);
    EXPECT_GE(y.y0_gamma.mean, -3.0 * y.y0_gamma.se);
    double exact = 0.0;
    const int K = 4000;
    for (int k = 0; k < K; ++k) {
        double t = t0 + (k + 0.5) * eps / K;
        exact += (std::pow(1.0 + std::exp(-t), 2) + s0 * s0 * (1.0 - std::exp(-2.0 * t)) / 2.0) / 2.0 * eps / K;
    }
    EXPECT_NEAR(y.y0_gamma.mean, exact, 3.0 * y.y0_gamma.se + 2e-2 * exact);
    EXPECT_NEAR(y.y0_bsde.mean, y.y0_gamma.mean, 3.0 * std::hypot(y.y0_bsde.se, y.y0_gamma.se) + 1e-12);
}
