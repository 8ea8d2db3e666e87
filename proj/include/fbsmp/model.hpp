#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fbsmp/linalg.hpp"
#include "fbsmp/paths.hpp"

namespace fbsmp {

// Evaluators take (t, x, y, z, u). Every evaluator must be pure.
using VecEval = std::function<Vec(double, const Vec&, double, double, const Vec&)>;
using MatEval = std::function<Mat(double, const Vec&, double, double, const Vec&)>;
using ScalarEval = std::function<double(double, const Vec&, double, double, const Vec&)>;
// One (n+2)x(n+2) Hessian over w = (x, y, z) per component.
using HessListEval = std::function<std::vector<Mat>(double, const Vec&, double, double, const Vec&)>;

struct ControlSet {
    enum class Kind { FINITE, BOX };

    static ControlSet finite(std::vector<Vec> points);
    // Continuous box; `grid_per_dim` points per axis are used when U must be sampled.
    static ControlSet box(Vec lo, Vec hi, int grid_per_dim);

    Kind kind = Kind::FINITE;
    std::vector<Vec> points;
    Vec lo, hi;
    int grid_per_dim = 0;

    int dim() const;
    bool continuous() const { return kind == Kind::BOX; }
    std::vector<Vec> sample() const;
    bool contains(const Vec& u, double tol = 1e-12) const;
};

enum class SigmaForm { GENERAL, LINEAR_IN_Z };

// sigma(t, x, y, z, u) = A(t) z + sigma1(t, x, y, u)
struct LinearInZ {
    std::function<Vec(double)> A;
    std::function<Vec(double, const Vec&, double, const Vec&)> sigma1;
};

struct ProblemSpec {
    std::string name;
    int n = 1;
    int k = 1;  // control dimension
    double T = 1.0;
    Vec x0;

    VecEval b, sigma;
    ScalarEval g;
    std::function<double(const Vec&)> phi;

    MatEval b_x, sigma_x;  // rows index components
    VecEval b_y, b_z, sigma_y, sigma_z;
    VecEval g_x;
    ScalarEval g_y, g_z;
    std::function<Vec(const Vec&)> phi_x;

    HessListEval b_hess, sigma_hess;
    MatEval g_hess;
    std::function<Mat(const Vec&)> phi_xx;

    double growth_L = 1.0;
    ControlSet control_set;
    SigmaForm sigma_form = SigmaForm::GENERAL;
    std::optional<LinearInZ> linear;

    // Structural flags declared by the author; they select cheaper code paths.
    bool forward_depends_on_yz = false;  // b or sigma reads y or z
    bool driver_depends_on_yz = false;   // g reads y or z
    bool sigma_free_of_z = true;         // sigma_z == 0
};

// All first partials at one point.
struct Jet {
    Vec b, s;
    double g = 0.0;
    Mat bx, sx;
    Vec by, bz, sy, sz;
    Vec gx;
    double gy = 0.0, gz = 0.0;
};

Jet eval_jet(const ProblemSpec& spec, double t, const Vec& x, double y, double z, const Vec& u);

// Replaces the second partials by central differences of the first partials
// (relative step 1e-4).
void use_fd_second_partials(ProblemSpec& spec);

struct ControlLaw {
    enum class Kind { OPEN_LOOP, FEEDBACK };

    static ControlLaw open_loop(Panel table);
    static ControlLaw feedback(std::function<Vec(double, const Vec&)> law);
    static ControlLaw constant(Vec u);

    Kind kind = Kind::FEEDBACK;
    std::shared_ptr<const Panel> table;
    std::function<Vec(double, const Vec&)> law;

    Vec value(int path, int node, double t, const Vec& x) const;
};

// Tabulates `law` along the state panel X; the result replays bit-identically as OpenLoop.
Panel tabulate(const ControlLaw& law, const Panel& X);

struct BenchmarkProblem {
    ProblemSpec spec;
    ControlLaw optimal;
    std::optional<double> J_star;
    // Analytic first-order adjoint p(t, x) along the optimal trajectory, when known.
    std::function<Vec(double, const Vec&)> adjoint_p;
};

struct LqParams {
    double sigma0 = 0.2;
    double x0 = 1.0;
    double T = 1.0;
    double u_lo = -4.0, u_hi = 4.0;
    int u_grid = 33;
};

// n=1, b=u, sigma=sigma0, g=(x^2+u^2)/2, phi=x^2/2. Feedback -P(t) x with P' = P^2 - 1, P(T)=1.
BenchmarkProblem benchmark_lq(const LqParams& prm = {});

// RK4 solution of P' = P^2 - 1, P(T) = 1, evaluated at t.
double riccati_lq(double T, double t, int steps = 1000);
// Value at (0, x0): P(0) x0^2 / 2 + sigma0^2/2 * int_0^T P, by RK4.
double lq_value(double T, double x0, double sigma0, int steps = 1000);

struct CoupledZParams {
    double alpha = 0.1;
    double x0 = 1.0;
    double T = 1.0;
    double c_min = 0.1;
};

// n=1, sigma = alpha z + (x + u), b = u - y, g = u^2/2 + x, phi = x, U = {-1, 0, 1}.
// Throws InvertibilityError when |1 - alpha p| < c_min along the adjoint.
BenchmarkProblem benchmark_coupled_z(const CoupledZParams& prm = {});

struct ValidationReport {
    int probes = 0;
    double max_derivative_mismatch = 0.0;
    std::string worst_derivative;
    double max_growth_ratio = 0.0;
    double max_linear_reconstruction = 0.0;
    bool derivatives_ok = false;
    bool growth_ok = false;
    bool linear_ok = true;
    bool pass() const { return derivatives_ok && growth_ok && linear_ok; }
};

ValidationReport validate_spec(const ProblemSpec& spec, int probes, SeedSpec seed);

}  // namespace fbsmp
