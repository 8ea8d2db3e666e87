#pragma once

#include <functional>
#include <vector>

#include "fbsmp/model.hpp"
#include "fbsmp/paths.hpp"
#include "fbsmp/regression.hpp"

namespace fbsmp {

// Per-node estimates of (Y, Z) as functions of the forward state, used to close the forward
// equation of a coupled system.
struct YZClosure {
    std::function<void(int path, int node, const Vec& x, double& y, double& z)> eval;
};

// Euler-Maruyama: X_{i+1} = X_i + b dt + sigma dB_i. Without closures y = z = 0 is used.
// Control values are written to `U` when it is non-null.
Panel simulate_forward(const ProblemSpec& spec, const ControlLaw& control, const YZClosure* closures,
                       const BrownianBundle& bundle, Panel* U = nullptr);

// A backward equation dY = -f dt + Z dB with Y(T) given, solved on regression features.
struct BackwardProblem {
    int dim = 1;
    std::function<void(int path, double* yT)> terminal;
    // f at (path, node) given current (y, z); receives dim-length arrays.
    std::function<void(int path, int node, const double* y, const double* z, double* f)> driver;
    bool driver_uses_y = true;
    // When set, f = a y + f(0, z) and y is solved implicitly by dividing by (1 - a dt).
    std::function<double(int path, int node)> implicit_a;
    // Applied to each path's fitted y and z (e.g. symmetrisation of matrix-valued processes).
    std::function<void(double* y)> post;
    int inner_max = 10;
    double inner_tol = 1e-10;
    // Regress Y_T + sum_{j>=i} f_j dt (true) or the one-step target Yfit_{i+1} + f_i dt (false).
    bool multi_step = true;
};

struct BackwardResult {
    Panel Y, Z;
    Panel Y_se, Z_se;  // leverage-based standard errors of the fitted values
    std::vector<std::vector<PolyFunction>> y_fn, z_fn;  // [node][component], nodes 0..N-1
    std::vector<Estimate> y0;  // Y(0) per component with Monte Carlo standard error
    Eigen::MatrixXd y0_paths;  // M x dim per-path pseudo-values whose mean estimates Y(0)
    bool ridge = false;
    int max_inner = 0;
    bool inner_converged = true;
};

// Y_i = projection of (Y_T + sum_{j>=i} f_j dt) on polynomials of the node-i features;
// Z_i = projection of (Yfit_{i+1} - E_i[Yfit_{i+1}]) dB_i / dt.
BackwardResult backward_sweep(const BackwardProblem& prob, const Panel& features,
                              const BrownianBundle& bundle, BasisSpec basis, bool keep_functions = false);

// Stacks the columns of several panels (same grid and paths) into one feature panel.
Panel stack_features(const std::vector<const Panel*>& parts);

struct BsdeResult {
    Panel Y, Z;
    Panel Y_se, Z_se;
    std::vector<PolyFunction> y_fn, z_fn;
    Estimate y0;
    Eigen::VectorXd y0_paths;
    bool ridge = false;
};

// Backward component of the state equation along a given X (and its control values U).
// `aux` adds columns to the regression features (e.g. a reference trajectory).
BsdeResult solve_bsde_regression(const ProblemSpec& spec, const Panel& X, const Panel& U,
                                 const BrownianBundle& bundle, BasisSpec basis, const Panel* aux = nullptr,
                                 bool multi_step = false);

struct PicardOpts {
    int max_sweeps = 50;
    double tol = 1e-6;
    double damping = 1.0;
    int basis_degree = 2;
    // Halve the damping when a sweep's residual grows.
    bool adaptive_damping = true;
    bool multi_step = false;  // see BackwardProblem::multi_step
};

struct FbsdeSolution {
    Panel X, Y, Z, U;
    Panel Y_se, Z_se;
    std::vector<double> trace;  // residual of each sweep after the first
    int sweeps = 0;
    double damping_used = 1.0;
    bool damping_adapted = false;
    bool ridge = false;
    PicardOpts opts;
    Estimate J;  // Y(0)
    Eigen::VectorXd J_paths;  // per-path pseudo-values of Y(0), for paired comparisons
};

// Sweep residual: max over nodes of the path-RMS change of (X, Y, Z).
FbsdeSolution solve_coupled_picard(const ProblemSpec& spec, const ControlLaw& control,
                                   const BrownianBundle& bundle, const PicardOpts& opts,
                                   const Panel* aux = nullptr);

// Max over nodes of the path-mean of |a - b| (first component of each).
double sup_node_mean_abs(const Panel& a, const Panel& b);

}  // namespace fbsmp
