#pragma once

#include <string>
#include <vector>

#include "fbsmp/adjoint.hpp"
#include "fbsmp/window.hpp"

namespace fbsmp {

struct DeltaOpts {
    double c_min = 0.1;
    int cap = 50;
    double tol = 1e-10;
    double damping = 1.0;
    // Skip the closed forms and always iterate (used to cross-check them).
    bool force_generic = false;
};

struct DeltaPoint {
    double delta = 0.0;
    double residual = 0.0;
    DeltaProcess::Method method = DeltaProcess::Method::FIXED_POINT;
    int iterations = 0;
    bool newton = false;
};

// Root of Delta = <p, sigma(t, x, y, z + Delta, u) - sigma(t, x, y, z, ubar)> at one point.
DeltaPoint solve_delta_point(const ProblemSpec& spec, double t, const Vec& x, double y, double z, const Vec& ubar,
                             const Vec& u, const Vec& p, const DeltaOpts& opts);

DeltaProcess solve_delta(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                         const SpikeSpec& spike, const DeltaOpts& opts);

struct VariationBundle {
    Panel X1, Y1, Z1, X2, Y2, Z2;
    Panel I;  // the Z2 - Zhat term of the second-order relation
    // Independent backward solves of the variational BSDEs and their distance to the relations.
    Panel Y1_bsde, Y2_bsde;
    bool relations_checked = false;
    double relation1 = 0.0;  // max_i mean_m |Y1_bsde - <p, X1>|
    double relation2 = 0.0;  // max_i mean_m |Y2_bsde - <p, X2> - <P X1, X1>/2 - Yhat|
    double Y2_0 = 0.0;
    // Per-path sums terminal + sum f dt of the variational BSDEs, with (Y, Z) taken from the
    // relations; their means estimate Y1(0) and Y2(0).
    Eigen::VectorXd y1_paths, y2_paths;
};

VariationBundle simulate_variations(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                    const SecondOrderAdjoint& adj2, const YhatSolution& yhat,
                                    const SpikeSpec& spike, const DeltaProcess& delta, const BrownianBundle& bundle,
                                    BasisSpec basis, bool check_relations);

// xi/eta/zeta^{k}: differences of the spiked and reference solutions minus the first k-1 variations.
struct SpikeDiffs {
    Panel xi[3], eta[3], zeta[3];
};

SpikeDiffs spike_diffs(const FbsdeSolution& spiked, const FbsdeSolution& ref, const VariationBundle& v);

struct OrderOpts {
    std::vector<double> ladder;  // window widths eps (multiples of dt)
    std::vector<double> betas{2.0};
    double t0 = -1.0;  // default T/4
    Vec u;             // spike value
    PicardOpts picard;
    AdjointOpts adjoint;
    DeltaOpts delta;
    bool check_relations = false;
    // Add the reference state as regression features for the spiked solves (for controls that
    // are not functions of the current state).
    bool reference_features = false;
};

struct OrderRow {
    double eps = 0.0;
    std::string norm;
    double beta = 0.0;
    Estimate est;
};

struct SlopeFit {
    std::string norm;
    double beta = 0.0;
    double slope = NAN;
    double half_width = NAN;  // 95% t-interval
    int points = 0;
    bool dropped_largest = false;
    bool valid = false;
};

struct EpsilonRecord {
    double eps = 0.0;
    bool ok = false;
    std::string error;
    double J_diff = 0.0, J_diff_se = 0.0;
    double Y2_0 = 0.0;
    // |J_diff - Y2(0)| from the paired per-path differences minus the variational sums.
    double defect = 0.0, defect_se = 0.0;
    // |J_diff - Yhat(0)| with the two estimates taken separately.
    double defect_plain = 0.0;
    Estimate yhat_bsde, yhat_gamma;
    double relation1 = NAN, relation2 = NAN;
    double delta_residual = 0.0;
    std::string delta_method;
    int sweeps = 0;
    bool damping_adapted = false;
};

struct OrderReport {
    std::string problem;
    double J_ref = 0.0;
    std::vector<OrderRow> rows;
    std::vector<SlopeFit> slopes;
    std::vector<EpsilonRecord> records;

    const SlopeFit* slope(const std::string& norm, double beta) const;
};

// Least squares fit of log(value) on log(eps); points with non-positive values are skipped.
SlopeFit fit_slope(const std::vector<double>& eps, const std::vector<double>& values);

// Default ladder T * {2^-4, ..., 2^-8}.
std::vector<double> default_ladder(double T);

OrderReport run_order_experiment(const ProblemSpec& spec, const ControlLaw& ubar, const BrownianBundle& bundle,
                                 const OrderOpts& opts);

// One row per (eps, norm, beta): eps,norm,beta,estimate,stderr.
void write_order_csv(const OrderReport& rep, const std::string& path);
void write_slopes_csv(const OrderReport& rep, const std::string& path);

}  // namespace fbsmp
