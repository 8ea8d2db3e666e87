#include <gtest/gtest.h>

#include <cmath>

#include "fbsmp/hamiltonian.hpp"
#include "test_support.hpp"

using namespace fbsmp;
using fbsmp::testing::m1;
using fbsmp::testing::v1;

namespace {

HamiltonianContext lq_context(const ProblemSpec& spec, double x, double ubar, double p, double q, double P) {
    HamiltonianContext c;
    c.spec = &spec;
    c.t = 0.3;
    c.x = v1(x);
    c.y = 0.4;
    c.z = 0.2;
    c.ubar = v1(ubar);
    c.p = v1(p);
    c.q = v1(q);
    c.P = m1(P);
    return c;
}

struct Solved {
    BenchmarkProblem bp;
    BrownianBundle bundle;
    FbsdeSolution sol;
    FirstOrderAdjoint adj1;
    SecondOrderAdjoint adj2;

    Solved(BenchmarkProblem b, const ControlLaw& u, int N, int M, std::uint64_t seed)
        : bp(std::move(b)), bundle(sample_brownian(TimeGrid(bp.spec.T, N), M, {seed})) {
        sol = solve_coupled_picard(bp.spec, u, bundle, {});
        adj1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
        adj2 = solve_second_order_adjoint(bp.spec, sol, adj1, bundle, {});
    }
};

}  // namespace

TEST(ScriptH, ReducesToHAtReferenceControl) {
    BenchmarkProblem bp = benchmark_lq();
    HamiltonianContext c = lq_context(bp.spec, 0.8, -0.5, 0.7, 0.3, 2.0);
    // H = p u + q sigma0 + (x^2 + u^2)/2
    const double H = 0.7 * -0.5 + 0.3 * 0.2 + 0.5 * (0.64 + 0.25);
    EXPECT_NEAR(eval_script_H(c, c.ubar), H, 1e-15);
    EXPECT_NEAR(eval_H(c, c.z, c.ubar), H, 1e-15);
    EXPECT_EQ(script_H_gap(c, c.ubar), 0.0);
}

TEST(ScriptH, ClassicalGapWithoutZDependenceAndP) {
    BenchmarkProblem bp = benchmark_coupled_z({0.0});  // alpha = 0: sigma free of z
    HamiltonianContext c = lq_context(bp.spec, 0.8, -1.0, 0.9, -0.4, 0.0);
    for (double u : {0.0, 1.0}) {
        // b = u - y, sigma = x + u, g = u^2/2 + x
        const double classical = 0.9 * (u + 1.0) + -0.4 * (u + 1.0) + 0.5 * (u * u - 1.0);
        EXPECT_NEAR(script_H_gap(c, v1(u)), classical, 1e-12);
    }
}

TEST(ScriptH, QuadraticTermIsNonNegativeForPositiveP) {
    BenchmarkProblem bp = benchmark_coupled_z({0.0});
    HamiltonianContext c = lq_context(bp.spec, 0.8, -1.0, 0.9, -0.4, 0.0);
    HamiltonianContext cp = c;
    cp.P = m1(1.5);
    for (double u : {0.0, 1.0}) EXPECT_GE(script_H_gap(cp, v1(u)) - script_H_gap(c, v1(u)), 0.0);
}

TEST(ScriptH, LqMinimizerMatchesDenseGridSearch) {
    // With p = x (Riccati) the LQ script H is u x + u^2/2 + const, minimized at u = -x.
    BenchmarkProblem bp = benchmark_lq();
    for (double x : {-1.7, -0.2, 0.0, 0.9, 2.3}) {
        HamiltonianContext c = lq_context(bp.spec, x, 0.0, x, 0.1, 1.0);
        double best = INFINITY, arg = 0.0;
        for (int k = 0; k <= 8000; ++k) {
            double u = -4.0 + 8.0 * k / 8000;
            double h = eval_script_H(c, v1(u));
            if (h < best) {
                best = h;
                arg = u;
            }
        }
        EXPECT_NEAR(arg, -x, 1e-3);
        EXPECT_GT(eval_script_H(c, v1(arg + 0.5)), best);
        EXPECT_GT(eval_script_H(c, v1(arg - 0.5)), best);
    }
}

TEST(MaximumPrinciple, PassesAtLqOptimum) {
    Solved s(benchmark_lq(), benchmark_lq().optimal, 128, 4000, 3);
    MpReport r = check_maximum_principle(s.bp.spec, s.sol, s.adj1, s.adj2, {});
    EXPECT_TRUE(r.pass) << "min z " << r.min_z;
    EXPECT_GE(r.pairs, 1000);
    for (const auto& e : r.entries)
        if (e.u == s.sol.U.vec(e.path, e.node)) EXPECT_EQ(e.gap, 0.0);
}

TEST(MaximumPrinciple, FailsDeterministicallyForZeroControl) {
    // sigma0 = 0, x0 = 1, u = 0: X = 1, p(t) = 1 + (T - t), and the gap p u + u^2/2 is negative
    // for u in (-2p, 0); at t = 0 its minimum over U is -p^2/2 = -2 at u = -2.
    LqParams prm;
    prm.sigma0 = 0.0;
    Solved s(benchmark_lq(prm), ControlLaw::constant(v1(0.0)), 32, 50, 4);
    MpReport r = check_maximum_principle(s.bp.spec, s.sol, s.adj1, s.adj2, {});
    EXPECT_FALSE(r.pass);
    EXPECT_LT(r.min_gap, 0.0);
    EXPECT_EQ(r.worst.se, 0.0);
    EXPECT_EQ(r.worst.t, 0.0);
    EXPECT_NEAR(r.worst.gap, -2.0, 1e-9);
    EXPECT_NEAR(r.worst.u[0], -2.0, 1e-12);
}

TEST(MaximumPrinciple, SinglePointControlSetPassesTrivially) {
    BenchmarkProblem bp = benchmark_lq();
    bp.spec.control_set = ControlSet::finite({v1(0.0)});
    Solved s(bp, ControlLaw::constant(v1(0.0)), 16, 100, 5);
    MpReport r = check_maximum_principle(s.bp.spec, s.sol, s.adj1, s.adj2, {});
    EXPECT_TRUE(r.pass);
    for (const auto& e : r.entries) EXPECT_EQ(e.gap, 0.0);
}

TEST(MaximumPrinciple, CoupledBenchmarkOptimumPasses) {
    BenchmarkProblem bp = benchmark_coupled_z();
    Solved s(bp, bp.optimal, 64, 2000, 6);
    MpReport r = check_maximum_principle(s.bp.spec, s.sol, s.adj1, s.adj2, {});
    EXPECT_TRUE(r.pass);
    // p = 1, P = 0: gap (u + 1)^2 / 2 >= 0 exactly, up to the adjoint noise.
    EXPECT_GE(r.min_gap, -1e-2);
}

TEST(ExpansionConsistency, NullSpikeGivesZeros) {
    BenchmarkProblem bp = benchmark_coupled_z();
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 300, {7});
    OrderOpts o;
    o.ladder = {0.25, 0.125};
    o.u = v1(-1.0);
    ConsistencyReport c = expansion_consistency(bp.spec, bp.optimal, bundle, o);
    ASSERT_EQ(c.rows.size(), 2u);
    for (const auto& r : c.rows) {
        EXPECT_EQ(r.J_diff, 0.0);
        EXPECT_EQ(r.Y2_0, 0.0);
        EXPECT_EQ(r.yhat_bsde.mean, 0.0);
        EXPECT_EQ(r.defect, 0.0);
    }
}

TEST(ExpansionConsistency, LqSpikesIncreaseCost) {
    BenchmarkProblem bp = benchmark_lq();
    auto bundle = sample_brownian(TimeGrid(1.0, 256), 2000, {8});
    OrderOpts o;
    o.ladder = default_ladder(1.0);
    o.u = v1(1.0);
    ConsistencyReport c = expansion_consistency(bp.spec, bp.optimal, bundle, o);
    ASSERT_EQ(c.rows.size(), 5u);
    for (const auto& r : c.rows) EXPECT_GT(r.J_diff, 0.0) << "eps " << r.eps;
    EXPECT_TRUE(c.defect_slope.valid);
    EXPECT_GT(c.defect_slope.slope, 1.0);
}
