#include <gtest/gtest.h>

#include <cmath>

#include "fbsmp/spike.hpp"
#include "test_support.hpp"

using namespace fbsmp;
using fbsmp::testing::v1;
using fbsmp::testing::zero_spec;

namespace {

double max_abs(const Panel& p) {
    double m = 0.0;
    for (double v : p.values()) m = std::max(m, std::abs(v));
    return m;
}

struct CzSetup {
    BenchmarkProblem bp = benchmark_coupled_z();
    BrownianBundle bundle;
    FbsdeSolution sol;
    FirstOrderAdjoint adj1;
    SecondOrderAdjoint adj2;
    GammaProcess gamma;

    CzSetup(int N, int M) : bundle(sample_brownian(TimeGrid(1.0, N), M, {31})) {
        sol = solve_coupled_picard(bp.spec, bp.optimal, bundle, {});
        adj1 = solve_first_order_adjoint(bp.spec, sol, bundle, {});
        adj2 = solve_second_order_adjoint(bp.spec, sol, adj1, bundle, {});
        gamma = solve_gamma(bp.spec, sol, adj1, bundle);
    }

    VariationBundle variations(const SpikeSpec& spike, bool check = false) const {
        DeltaProcess d = solve_delta(bp.spec, sol, adj1, spike, {});
        YhatSolution y = solve_yhat(bp.spec, sol, adj1, adj2, gamma, spike, d, bundle, {2});
        return simulate_variations(bp.spec, sol, adj1, adj2, y, spike, d, bundle, {2}, check);
    }
};

}  // namespace

TEST(SpikeWindow, GridAlignmentIsEnforced) {
    TimeGrid g(1.0, 16);
    SpikeSpec s = make_spike(g, 0.25, 0.125, v1(1.0));
    EXPECT_EQ(s.i0, 4);
    EXPECT_EQ(s.width, 2);
    EXPECT_TRUE(s.in_window(5));
    EXPECT_FALSE(s.in_window(6));
    EXPECT_DOUBLE_EQ(s.epsilon(g), 0.125);
    EXPECT_THROW(make_spike(g, 0.25, 0.1, v1(1.0)), std::invalid_argument);
    EXPECT_THROW(make_spike(g, 0.3, 0.125, v1(1.0)), std::invalid_argument);
    EXPECT_THROW(make_spike(g, 0.875, 0.25, v1(1.0)), std::invalid_argument);
}

TEST(SpikeWindow, SpikedTableOnlyChangesTheWindow) {
    TimeGrid g(1.0, 8);
    Panel u(g, 3, 1);
    for (std::size_t k = 0; k < u.values().size(); ++k) u.values()[k] = 0.01 * k;
    SpikeSpec s = make_spike(g, 0.25, 0.25, v1(7.0));
    Panel t = spiked_table(u, s);
    for (int m = 0; m < 3; ++m)
        for (int i = 0; i <= 8; ++i) EXPECT_EQ(t.at(m, i), s.in_window(i) ? 7.0 : u.at(m, i));
}

TEST(Delta, ZeroWhenSpikeEqualsReference) {
    CzSetup c(32, 300);
    DeltaProcess d = solve_delta(c.bp.spec, c.sol, c.adj1, make_spike(c.bundle.grid, 0.25, 0.25, v1(-1.0)), {});
    EXPECT_EQ(max_abs(d.delta), 0.0);
}

TEST(Delta, ClosedFormMatchesIterationAndVanishesOffWindow) {
    CzSetup c(64, 500);
    for (double u : {0.0, 1.0}) {
        SpikeSpec s = make_spike(c.bundle.grid, 0.25, 0.125, v1(u));
        DeltaOpts o;
        DeltaProcess cf = solve_delta(c.bp.spec, c.sol, c.adj1, s, o);
        o.force_generic = true;
        DeltaProcess it = solve_delta(c.bp.spec, c.sol, c.adj1, s, o);
        EXPECT_EQ(cf.method, DeltaProcess::Method::CLOSED_FORM_LINEAR);
        EXPECT_EQ(it.method, DeltaProcess::Method::FIXED_POINT);
        for (int m = 0; m < 500; ++m)
            for (int i = 0; i <= 64; ++i) {
                EXPECT_NEAR(cf.delta.at(m, i), it.delta.at(m, i), 1e-10);
                if (!s.in_window(i)) EXPECT_EQ(cf.delta.at(m, i), 0.0);
            }
        EXPECT_LE(cf.max_residual, 1e-10);
        EXPECT_LE(it.max_residual, 1e-10);
        // p = 1 and A = alpha: Delta = (u - ubar) / (1 - alpha) on the window.
        EXPECT_NEAR(cf.delta.at(0, s.i0), (u + 1.0) / 0.9, 1e-2);
    }
}

TEST(Delta, NonlinearDiffusionMatchesBisection) {
    // sigma = sin(z)/2 + u with p = 1: Delta = (sin(z + Delta) - sin(z))/2 + (u - ubar).
    ProblemSpec s = zero_spec("sin_z");
    s.sigma = [](double, const Vec&, double, double z, const Vec& u) { return v1(0.5 * std::sin(z) + u[0]); };
    s.sigma_z = [](double, const Vec&, double, double z, const Vec&) { return v1(0.5 * std::cos(z)); };
    s.sigma_free_of_z = false;
    s.forward_depends_on_yz = true;
    for (double z : {-2.0, -0.3, 0.0, 0.8, 2.5})
        for (double du : {-1.5, -0.2, 0.7, 2.0}) {
            const double ubar = 0.1, u = ubar + du;
            DeltaPoint d = solve_delta_point(s, 0.3, v1(0.0), 0.0, z, v1(ubar), v1(u), v1(1.0), {});
            double lo = -10.0, hi = 10.0;
            auto f = [&](double D) { return D - 0.5 * (std::sin(z + D) - std::sin(z)) - du; };
            for (int k = 0; k < 200; ++k) {
                double mid = 0.5 * (lo + hi);
                (f(mid) > 0.0 ? hi : lo) = mid;
            }
            EXPECT_NEAR(d.delta, 0.5 * (lo + hi), 1e-8) << "z=" << z << " du=" << du;
            EXPECT_LE(d.residual, 1e-10);
        }
}

TEST(Variations, VanishForReferenceSpike) {
    CzSetup c(32, 300);
    VariationBundle v = c.variations(make_spike(c.bundle.grid, 0.25, 0.25, v1(-1.0)));
    for (const Panel* p : {&v.X1, &v.Y1, &v.Z1, &v.X2, &v.Y2, &v.Z2}) EXPECT_EQ(max_abs(*p), 0.0);
}

TEST(Variations, FirstOrderYStartsAtZero) {
    CzSetup c(64, 1000);
    VariationBundle v = c.variations(make_spike(c.bundle.grid, 0.25, 0.125, v1(1.0)));
    for (int m = 0; m < 1000; ++m) {
        EXPECT_EQ(v.X1.at(m, 0), 0.0);
        EXPECT_NEAR(v.Y1.at(m, 0), 0.0, 1e-12);
    }
    EXPECT_GT(max_abs(v.X1), 0.0);
}

TEST(Variations, RelationResidualsAreSmallOnCoupledBenchmark) {
    CzSetup c(128, 4000);
    VariationBundle v = c.variations(make_spike(c.bundle.grid, 0.25, 1.0 / 16.0, v1(0.0)), true);
    ASSERT_TRUE(v.relations_checked);
    EXPECT_LE(v.relation1, 5e-2);
    EXPECT_LE(v.relation2, 5e-2);
}

TEST(SpikeDiffs, ChainIdentitiesHoldNodeExactly) {
    CzSetup c(64, 500);
    SpikeSpec s = make_spike(c.bundle.grid, 0.25, 0.125, v1(0.0));
    VariationBundle v = c.variations(s);
    FbsdeSolution ref = solve_coupled_picard(c.bp.spec, ControlLaw::open_loop(c.sol.U), c.bundle, {});
    FbsdeSolution sp = solve_coupled_picard(c.bp.spec, ControlLaw::open_loop(spiked_table(ref.U, s)), c.bundle, {});
    SpikeDiffs d = spike_diffs(sp, ref, v);
    for (std::size_t k = 0; k < d.xi[0].values().size(); ++k) {
        EXPECT_EQ(d.xi[0].values()[k], sp.X.values()[k] - ref.X.values()[k]);
        EXPECT_EQ(d.xi[2].values()[k], d.xi[1].values()[k] - v.X2.values()[k]);
        EXPECT_EQ(d.eta[2].values()[k], d.eta[1].values()[k] - v.Y2.values()[k]);
        EXPECT_EQ(d.zeta[2].values()[k], d.zeta[1].values()[k] - v.Z2.values()[k]);
    }
}

TEST(SlopeFit, RecoversExactPowerLaw) {
    std::vector<double> eps = default_ladder(2.0), vals;
    ASSERT_EQ(eps.size(), 5u);
    EXPECT_DOUBLE_EQ(eps.front(), 2.0 / 16.0);
    EXPECT_DOUBLE_EQ(eps.back(), 2.0 / 256.0);
    for (double e : eps) vals.push_back(3.0 * std::pow(e, 1.5));
    SlopeFit f = fit_slope(eps, vals);
    ASSERT_TRUE(f.valid);
    EXPECT_NEAR(f.slope, 1.5, 1e-12);
    EXPECT_NEAR(f.half_width, 0.0, 1e-10);
    EXPECT_EQ(f.points, 5);
    vals[2] = 0.0;  // dropped from the fit
    EXPECT_EQ(fit_slope(eps, vals).points, 4);
}

TEST(OrderExperiment, ReportShapeAndFailedWidths) {
    BenchmarkProblem bp = benchmark_lq();
    auto bundle = sample_brownian(TimeGrid(1.0, 32), 400, {5});
    OrderOpts o;
    o.ladder = {0.25, 0.125, 0.0625, 0.01};  // the last width is not on the grid
    o.betas = {2.0, 4.0};
    o.u = v1(1.0);
    OrderReport r = run_order_experiment(bp.spec, bp.optimal, bundle, o);
    ASSERT_EQ(r.records.size(), 4u);
    EXPECT_TRUE(r.records[0].ok);
    EXPECT_FALSE(r.records[3].ok);
    EXPECT_FALSE(r.records[3].error.empty());
    int xi1_b2 = 0;
    for (const auto& row : r.rows) xi1_b2 += row.norm == "xi1" && row.beta == 2.0;
    EXPECT_EQ(xi1_b2, 3);
    ASSERT_NE(r.slope("xi1", 4.0), nullptr);
    EXPECT_EQ(r.slope("xi1", 4.0)->points, 3);
    // LQ optimum: every spike costs more.
    for (const auto& rec : r.records)
        if (rec.ok) EXPECT_GT(rec.J_diff, 0.0);
}
