#pragma once

#include <string>
#include <vector>

#include "fbsmp/spike.hpp"

namespace fbsmp {

// Reference state and adjoint values at one (path, node).
struct HamiltonianContext {
    const ProblemSpec* spec = nullptr;
    double t = 0.0;
    Vec x;
    double y = 0.0, z = 0.0;
    Vec ubar;
    Vec p, q;
    Mat P;
    DeltaOpts delta;
};

HamiltonianContext make_context(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                const SecondOrderAdjoint& adj2, int path, int node, const DeltaOpts& delta = {});

// H = <p, b> + <q, sigma> + g at (t, x, y, z, u).
double eval_H(const HamiltonianContext& ctx, double z, const Vec& u);

// Generalized Hamiltonian: H at z + Delta(u) plus dsigma^T P dsigma / 2.
double eval_script_H(const HamiltonianContext& ctx, const Vec& u);

// eval_script_H(u) - eval_script_H(ubar); exactly zero when u == ubar.
double script_H_gap(const HamiltonianContext& ctx, const Vec& u);

struct MpOpts {
    int node_samples = 32;  // evenly spaced over [0, T)
    int path_samples = 64;  // the first paths of the bundle
    int refine_rounds = 3;  // bisection steps around the grid minimiser for a box U
    double z_threshold = -3.0;
    // Gaps with |gap| below this times (1 + |H(ubar)|) count as zero (rounding floor).
    double zero_floor = 1e-12;
    DeltaOpts delta;
};

struct MpEntry {
    int node = 0, path = 0;
    double t = 0.0;
    Vec u;
    double gap = 0.0;
    double se = 0.0;  // first-order propagation of the adjoint standard errors
    double z = 0.0;
    bool refined = false;
};

struct MpReport {
    std::vector<MpEntry> entries;
    MpEntry worst;  // smallest z-score, ties broken by the smaller gap
    double min_z = 0.0;
    double min_gap = 0.0;
    int pairs = 0;  // distinct (node, path, u) evaluations
    bool pass = true;
};

MpReport check_maximum_principle(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                 const SecondOrderAdjoint& adj2, const MpOpts& opts);

// node,path,t,u_0..,gap,stderr,z,refined
void write_mp_csv(const MpReport& rep, const std::string& path);

struct ConsistencyRow {
    double eps = 0.0;
    double J_diff = 0.0, J_diff_se = 0.0;
    double Y2_0 = 0.0;
    Estimate yhat_bsde, yhat_gamma;
    double defect = 0.0;
    double defect_over_eps = 0.0;
};

struct ConsistencyReport {
    std::vector<ConsistencyRow> rows;
    double max_defect_over_eps = 0.0;
    SlopeFit defect_slope;
    bool defect_over_eps_decreasing = false;  // as eps shrinks
};

ConsistencyReport expansion_consistency(const OrderReport& rep);
ConsistencyReport expansion_consistency(const ProblemSpec& spec, const ControlLaw& ubar, const BrownianBundle& bundle,
                                        const OrderOpts& opts);

}  // namespace fbsmp
