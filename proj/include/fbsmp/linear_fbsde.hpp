#pragma once

#include <vector>

#include "fbsmp/fbsde.hpp"
#include "fbsmp/paths.hpp"

namespace fbsmp {

// dX = [a1 X + b1 Y + g1 Z + L1] dt + [a2 X + b2 Y + g2 Z + L2] dB
// dY = -[<a3, X> + b3 Y + g3 Z + L3] dt + Z dB,  X(0) = x0,  Y(T) = <kappa, X(T)> + varsigma
// a1, a2 are n x n (row-major panels of dim n*n); a3, b1, b2, g1, g2, L1, L2 have dim n;
// b3, g3, L3 are scalar panels. kappa and varsigma are F_T-measurable, one value per path.
struct LinearFbsdeSpec {
    int n = 1;
    Panel a1, a2, a3, b1, b2, g1, g2, b3, g3;
    Panel L1, L2, L3;
    std::vector<Vec> kappa;
    std::vector<double> varsigma;
    Vec x0;

    // Largest absolute coefficient entry over all panels.
    double coefficient_bound() const;
};

// Decoupling field Y = <p, X> + phi.
struct DecouplingData {
    Panel p, q, phi, nu, K1;
    double margin = 0.0;  // min |1 - <p, g2>|
    bool ridge = false;
};

// Solves the (p, q) and (phi, nu) backward equations by regression on `features`
// (typically the Brownian path). Throws InvertibilityError when the margin drops below c_min.
DecouplingData decouple_linear(const LinearFbsdeSpec& spec, const BrownianBundle& bundle, const Panel& features,
                               BasisSpec basis, double c_min);

struct LinearFbsdeSolution {
    Panel X, Y, Z;
};

// Euler scheme for the decoupled forward equation, then Y and Z from the decoupling field.
LinearFbsdeSolution solve_linear_fbsde(const LinearFbsdeSpec& spec, const BrownianBundle& bundle,
                                       const DecouplingData& dec, double c_min);

struct EstimateReport {
    double lhs = 0.0;  // E sup|X|^b + E sup|Y|^b + E (int |Z|^2)^{b/2}
    double rhs = 0.0;  // |x0|^b + E|varsigma|^b + E (int |L1| + |L3|)^b + E (int |L2|^2)^{b/2}
    double ratio = 0.0;
};

EstimateReport check_lbeta_estimate(const LinearFbsdeSolution& sol, const LinearFbsdeSpec& spec,
                                    const MomentSpec& beta);

// B_t along every path as a one-column panel.
Panel brownian_panel(const BrownianBundle& bundle);

// Scalar (n = 1) constant-coefficient system with forcings affine in the Brownian path:
// L_j(t) = c_j + s_j B_t, varsigma = c_T + s_T B_T.
struct ScalarLinearCoeffs {
    double a1 = 0, a2 = 0, a3 = 0, b1 = 0, b2 = 0, b3 = 0, g1 = 0, g2 = 0, g3 = 0, kappa = 0;
};
struct ScalarForcing {
    double l1c = 0, l1s = 0, l2c = 0, l2s = 0, l3c = 0, l3s = 0, vc = 0, vs = 0, x0 = 0;
};
LinearFbsdeSpec scalar_linear_spec(const BrownianBundle& bundle, const ScalarLinearCoeffs& c,
                                   const ScalarForcing& f);

}  // namespace fbsmp
