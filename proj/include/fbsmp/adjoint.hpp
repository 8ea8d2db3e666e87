#pragma once

#include "fbsmp/fbsde.hpp"
#include "fbsmp/window.hpp"

namespace fbsmp {

struct AdjointOpts {
    int basis_degree = 2;
    double c_min = 0.1;
    int inner_max = 20;
    double inner_tol = 1e-12;
};

struct FirstOrderAdjoint {
    Panel p, q, K1;
    Panel p_se, q_se;
    double margin = 0.0;  // min |1 - <p, sigma_z>|
    double max_abs_q = 0.0;
    double k1_identity = 0.0;  // max |(1 - <p, sigma_z>) K1 - sigma_x^T p - <p, sigma_y> p - q|
    int max_inner = 0;
    bool ridge = false;
};

// (p, q) along the reference solution; `aux` adds regression features.
FirstOrderAdjoint solve_first_order_adjoint(const ProblemSpec& spec, const FbsdeSolution& sol,
                                            const BrownianBundle& bundle, const AdjointOpts& opts,
                                            const Panel* aux = nullptr);

struct SecondOrderAdjoint {
    Panel P, Q, K2;  // n*n row-major
    Panel P_se;
    Panel Hy, Hz;
    double max_asymmetry = 0.0;
    int max_inner = 0;
    bool ridge = false;
};

SecondOrderAdjoint solve_second_order_adjoint(const ProblemSpec& spec, const FbsdeSolution& sol,
                                              const FirstOrderAdjoint& adj1, const BrownianBundle& bundle,
                                              const AdjointOpts& opts, const Panel* aux = nullptr);

struct GammaProcess {
    Panel gamma, drift, diffusion;
};

// gamma_{i+1} = gamma_i exp(-log(1 - a_i dt) + c_i dB_i - c_i^2 dt / 2), gamma_0 = 1.
// The drift factor matches the implicit treatment of a in the Yhat equation.
GammaProcess stochastic_exponential(const Panel& a, const Panel& c, const BrownianBundle& bundle);

GammaProcess solve_gamma(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                         const BrownianBundle& bundle);

struct YhatSolution {
    Panel Yhat, Zhat;
    Panel forcing;      // [dH + dsigma^T P dsigma / 2] on the window
    Estimate y0_bsde;   // Yhat(0) from the backward solve
    Estimate y0_gamma;  // E sum gamma_i forcing_i dt / (1 - a_i dt)
};

YhatSolution solve_yhat(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                        const SecondOrderAdjoint& adj2, const GammaProcess& gamma, const SpikeSpec& spike,
                        const DeltaProcess& delta, const BrownianBundle& bundle, BasisSpec basis,
                        const Panel* aux = nullptr);

// Hamiltonian increment dH(t, Delta) + dsigma^T P dsigma / 2 at one point.
double spike_forcing(const ProblemSpec& spec, double t, const Vec& x, double y, double z, const Vec& ubar,
                     const Vec& u, double delta, const Vec& p, const Vec& q, const Mat& P);

}  // namespace fbsmp
