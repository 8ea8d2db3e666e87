#include <gtest/gtest.h>

#include <cmath>

#include "fbsmp/errors.hpp"
#include "fbsmp/fbsde.hpp"
#include "test_support.hpp"

using namespace fbsmp;
using fbsmp::testing::m1;
using fbsmp::testing::v1;
using fbsmp::testing::zero_spec;

TEST(ValidateSpec, ConstantCoefficientsPass) {
    ProblemSpec s = zero_spec("const");
    s.sigma = [](double, const Vec&, double, double, const Vec&) { return v1(1.0); };
    s.phi = [](const Vec& x) { return x[0]; };
    s.phi_x = [](const Vec&) { return v1(1.0); };
    ValidationReport r = validate_spec(s, 100, {1});
    EXPECT_TRUE(r.pass());
    // Central differences of linear functions differ from the exact slope by rounding only.
    EXPECT_LE(r.max_derivative_mismatch, 1e-9);
}

TEST(ValidateSpec, WrongDerivativeIsCaught) {
    ProblemSpec s = zero_spec("bad_bx");
    s.b = [](double, const Vec& x, double, double, const Vec&) { return v1(x[0]); };
    s.b_x = [](double, const Vec&, double, double, const Vec&) { return m1(2.0); };
    ValidationReport r = validate_spec(s, 100, {1});
    EXPECT_FALSE(r.pass());
    EXPECT_GE(r.max_derivative_mismatch, 1.0);
}

TEST(ValidateSpec, Benchmarks) {
    ValidationReport lq = validate_spec(benchmark_lq().spec, 1000, {2});
    EXPECT_TRUE(lq.pass()) << lq.worst_derivative;
    EXPECT_LE(lq.max_derivative_mismatch, 1e-4);
    ValidationReport cz = validate_spec(benchmark_coupled_z().spec, 1000, {3});
    EXPECT_TRUE(cz.pass()) << cz.worst_derivative;
    EXPECT_TRUE(cz.linear_ok);
    EXPECT_LE(cz.max_linear_reconstruction, 1e-14);
}

TEST(ValidateSpec, BrokenLinearDecompositionIsCaught) {
    BenchmarkProblem bp = benchmark_coupled_z();
    bp.spec.linear->A = [](double) { return v1(0.2); };
    EXPECT_FALSE(validate_spec(bp.spec, 50, {4}).linear_ok);
}

TEST(Riccati, ConstantSolution) {
    // P = 1 solves P' = P^2 - 1 with P(T) = 1.
    for (double t : {0.0, 0.25, 0.5, 1.0}) EXPECT_NEAR(riccati_lq(1.0, t), 1.0, 1e-12);
}

TEST(Riccati, ValueMatchesClosedForm) {
    // With P = 1: V(0, x0) = x0^2 / 2 + sigma0^2 T / 2.
    EXPECT_NEAR(lq_value(1.0, 1.0, 0.2), 0.52, 1e-10);
    EXPECT_NEAR(lq_value(2.0, -0.5, 0.3), 0.125 + 0.09, 1e-10);
    EXPECT_NEAR(*benchmark_lq().J_star, 0.52, 1e-10);
}

TEST(LqBenchmark, ZeroDataGivesZeroCost) {
    LqParams p;
    p.x0 = 0.0;
    p.sigma0 = 0.0;
    BenchmarkProblem bp = benchmark_lq(p);
    EXPECT_EQ(*bp.J_star, 0.0);
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 50, {1});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    for (double x : sol.X.values()) EXPECT_EQ(x, 0.0);
    for (double u : sol.U.values()) EXPECT_EQ(u, 0.0);
    EXPECT_EQ(sol.J.mean, 0.0);
}

TEST(LqBenchmark, DeterministicCostMatchesOdeOracle) {
    LqParams p;
    p.sigma0 = 0.0;
    BenchmarkProblem bp = benchmark_lq(p);
    // Closed loop x' = -x: J = int e^{-2t} dt + e^{-2T}/2 = 1/2 for T = 1, x0 = 1.
    EXPECT_NEAR(*bp.J_star, 0.5, 1e-10);
    auto bundle = sample_brownian(TimeGrid(1.0, 1024), 20, {1});
    FbsdeSolution sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
    EXPECT_NEAR(sol.J.mean, 0.5, 2e-3);
}

TEST(CoupledZBenchmark, GuardRejectsSmallMargin) {
    CoupledZParams p;
    p.alpha = 0.95;  // p = 1, so |1 - alpha p| = 0.05
    EXPECT_THROW(benchmark_coupled_z(p), InvertibilityError);
    p.alpha = 0.0;
    BenchmarkProblem bp = benchmark_coupled_z(p);
    const Vec z0 = v1(0.0);
    EXPECT_EQ(bp.spec.sigma_z(0.3, v1(1.0), 0.0, 2.0, z0)[0], 0.0);
}

TEST(ControlSet, SamplingAndMembership) {
    ControlSet box = ControlSet::box(v1(-2.0), v1(2.0), 5);
    auto pts = box.sample();
    ASSERT_EQ(pts.size(), 5u);
    EXPECT_EQ(pts.front()[0], -2.0);
    EXPECT_EQ(pts[2][0], 0.0);
    EXPECT_TRUE(box.contains(v1(1.3)));
    EXPECT_FALSE(box.contains(v1(2.1)));
    ControlSet fin = ControlSet::finite({v1(-1.0), v1(1.0)});
    EXPECT_TRUE(fin.contains(v1(1.0)));
    EXPECT_FALSE(fin.contains(v1(0.0)));
}

TEST(ControlLaw, TabulatedLawReplaysExactly) {
    BenchmarkProblem bp = benchmark_lq();
    auto bundle = sample_brownian(TimeGrid(1.0, 16), 30, {5});
    Panel U;
    Panel X = simulate_forward(bp.spec, bp.optimal, nullptr, bundle, &U);
    Panel tab = tabulate(bp.optimal, X);
    EXPECT_EQ(tab.values(), U.values());
    Panel U2;
    Panel X2 = simulate_forward(bp.spec, ControlLaw::open_loop(tab), nullptr, bundle, &U2);
    EXPECT_EQ(X2.values(), X.values());
}
