#include "fbsmp/linear_fbsde.hpp"

#include <algorithm>
#include <cmath>

#include "fbsmp/errors.hpp"

namespace fbsmp {

namespace {

double max_abs(const Panel& p) {
    double m = 0.0;
    for (double v : p.values()) m = std::max(m, std::abs(v));
    return m;
}

double inv_margin(double v, double c_min, int m, int i) {
    if (std::abs(v) < c_min)
        throw InvertibilityError("|1 - <p, g2>| = " + fmt_double(std::abs(v)) + " below c_min at path " +
                                     std::to_string(m) + ", node " + std::to_string(i),
                                 std::abs(v));
    return 1.0 / v;
}

}  // namespace

double LinearFbsdeSpec::coefficient_bound() const {
    double m = 0.0;
    for (const Panel* p : {&a1, &a2, &a3, &b1, &b2, &g1, &g2, &b3, &g3}) m = std::max(m, max_abs(*p));
    return m;
}

Panel brownian_panel(const BrownianBundle& bundle) {
    Panel B(bundle.grid, bundle.M, 1, "B");
    for (int m = 0; m < bundle.M; ++m)
        for (int i = 0; i < bundle.grid.N; ++i) B.at(m, i + 1) = B.at(m, i) + bundle.inc(m, i);
    return B;
}

LinearFbsdeSpec scalar_linear_spec(const BrownianBundle& bundle, const ScalarLinearCoeffs& c,
                                   const ScalarForcing& f) {
    const TimeGrid& g = bundle.grid;
    const int M = bundle.M;
    LinearFbsdeSpec s;
    s.n = 1;
    auto constant = [&](double v, const char* name) {
        Panel p(g, M, 1, name);
        std::fill(p.values().begin(), p.values().end(), v);
        return p;
    };
    s.a1 = constant(c.a1, "a1");
    s.a2 = constant(c.a2, "a2");
    s.a3 = constant(c.a3, "a3");
    s.b1 = constant(c.b1, "b1");
    s.b2 = constant(c.b2, "b2");
    s.b3 = constant(c.b3, "b3");
    s.g1 = constant(c.g1, "g1");
    s.g2 = constant(c.g2, "g2");
    s.g3 = constant(c.g3, "g3");
    Panel B = brownian_panel(bundle);
    auto affine = [&](double c0, double c1, const char* name) {
        Panel p(g, M, 1, name);
        for (int m = 0; m < M; ++m)
            for (int i = 0; i <= g.N; ++i) p.at(m, i) = c0 + c1 * B.at(m, i);
        return p;
    };
    s.L1 = affine(f.l1c, f.l1s, "L1");
    s.L2 = affine(f.l2c, f.l2s, "L2");
    s.L3 = affine(f.l3c, f.l3s, "L3");
    s.kappa.assign(M, Vec::Constant(1, c.kappa));
    s.varsigma.resize(M);
    for (int m = 0; m < M; ++m) s.varsigma[m] = f.vc + f.vs * B.at(m, g.N);
    s.x0 = Vec::Constant(1, f.x0);
    return s;
}

DecouplingData decouple_linear(const LinearFbsdeSpec& s, const BrownianBundle& bundle, const Panel& features,
                               BasisSpec basis, double c_min) {
    const int n = s.n, M = bundle.M, N = bundle.grid.N;
    DecouplingData dec;

    // (p, q): dp = -A dt + q dB, p(T) = kappa
    BackwardProblem pp;
    pp.dim = n;
    pp.terminal = [&](int m, double* yT) {
        for (int k = 0; k < n; ++k) yT[k] = s.kappa[m][k];
    };
    pp.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        Eigen::Map<const Eigen::VectorXd> p(y, n), q(z, n);
        Eigen::MatrixXd A1 = s.a1.mat(m, i), A2 = s.a2.mat(m, i);
        Eigen::VectorXd a3 = s.a3.vec(m, i), b1 = s.b1.vec(m, i), b2 = s.b2.vec(m, i), g1 = s.g1.vec(m, i),
                        g2 = s.g2.vec(m, i);
        double b3 = s.b3.at(m, i), g3 = s.g3.at(m, i);
        double den = 1.0 - p.dot(g2);
        // the guard is applied after the sweep; here only avoid dividing by zero
        if (std::abs(den) < 1e-300) den = 1e-300;
        Eigen::VectorXd K1 = (A2.transpose() * p + p.dot(b2) * p + q) / den;
        Eigen::VectorXd A = a3 + b3 * p + g3 * K1 + A1.transpose() * p + p.dot(b1) * p + p.dot(g1) * K1 +
                            A2.transpose() * q + q.dot(b2) * p + q.dot(g2) * K1;
        for (int k = 0; k < n; ++k) f[k] = A[k];
    };
    pp.driver_uses_y = true;
    pp.inner_max = 20;
    pp.inner_tol = 1e-12;
    BackwardResult pr = backward_sweep(pp, features, bundle, basis);
    dec.p = std::move(pr.Y);
    dec.q = std::move(pr.Z);
    dec.p.set_label("p");
    dec.q.set_label("q");
    dec.ridge = pr.ridge;

    dec.K1 = Panel(bundle.grid, M, n, "K1");
    dec.margin = INFINITY;
    for (int m = 0; m < M; ++m)
        for (int i = 0; i <= N; ++i) {
            Eigen::VectorXd p = dec.p.vec(m, i), q = dec.q.vec(m, i);
            double den = 1.0 - p.dot(Eigen::VectorXd(s.g2.vec(m, i)));
            dec.margin = std::min(dec.margin, std::abs(den));
            double inv = inv_margin(den, c_min, m, i);
            Eigen::VectorXd K1 =
                inv * (s.a2.mat(m, i).transpose() * p + p.dot(Eigen::VectorXd(s.b2.vec(m, i))) * p + q);
            dec.K1.set(m, i, K1);
        }

    // (phi, nu): dphi = -C dt + nu dB, phi(T) = varsigma; C is affine in (phi, nu)
    const Panel& P = dec.p;
    const Panel& Q = dec.q;
    auto coeffs = [&](int m, int i, double& D, double& pb2) {
        Eigen::VectorXd p = P.vec(m, i);
        D = 1.0 / (1.0 - p.dot(Eigen::VectorXd(s.g2.vec(m, i))));
        pb2 = p.dot(Eigen::VectorXd(s.b2.vec(m, i)));
    };
    BackwardProblem fp;
    fp.dim = 1;
    fp.terminal = [&](int m, double* yT) { *yT = s.varsigma[m]; };
    fp.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        double D, pb2;
        coeffs(m, i, D, pb2);
        Eigen::VectorXd p = P.vec(m, i), q = Q.vec(m, i);
        Eigen::VectorXd b1 = s.b1.vec(m, i), b2 = s.b2.vec(m, i), g1 = s.g1.vec(m, i), g2 = s.g2.vec(m, i),
                        L1 = s.L1.vec(m, i), L2 = s.L2.vec(m, i);
        double phi = *y, nu = *z;
        double w = D * (pb2 * phi + p.dot(L2) + nu);
        *f = s.b3.at(m, i) * phi + s.g3.at(m, i) * w + s.L3.at(m, i) + p.dot(b1 * phi + g1 * w + L1) +
             q.dot(b2 * phi + g2 * w + L2);
    };
    fp.implicit_a = [&](int m, int i) {
        double D, pb2;
        coeffs(m, i, D, pb2);
        Eigen::VectorXd p = P.vec(m, i), q = Q.vec(m, i);
        Eigen::VectorXd b1 = s.b1.vec(m, i), b2 = s.b2.vec(m, i), g1 = s.g1.vec(m, i), g2 = s.g2.vec(m, i);
        return s.b3.at(m, i) + s.g3.at(m, i) * D * pb2 + p.dot(b1) + p.dot(g1) * D * pb2 + q.dot(b2) +
               q.dot(g2) * D * pb2;
    };
    BackwardResult fr = backward_sweep(fp, features, bundle, basis);
    dec.phi = std::move(fr.Y);
    dec.nu = std::move(fr.Z);
    dec.phi.set_label("phi");
    dec.nu.set_label("nu");
    dec.ridge = dec.ridge || fr.ridge;
    return dec;
}

LinearFbsdeSolution solve_linear_fbsde(const LinearFbsdeSpec& s, const BrownianBundle& bundle,
                                       const DecouplingData& dec, double c_min) {
    if (dec.margin < c_min)
        throw InvertibilityError("decoupling margin " + fmt_double(dec.margin) + " below c_min", dec.margin);
    const int n = s.n, M = bundle.M, N = bundle.grid.N;
    const double dt = bundle.grid.dt();
    LinearFbsdeSolution sol;
    sol.X = Panel(bundle.grid, M, n, "X");
    sol.Y = Panel(bundle.grid, M, 1, "Y");
    sol.Z = Panel(bundle.grid, M, 1, "Z");
    for (int m = 0; m < M; ++m) {
        Eigen::VectorXd x = s.x0;
        for (int i = 0; i <= N; ++i) {
            sol.X.set(m, i, x);
            Eigen::VectorXd p = dec.p.vec(m, i), K1 = dec.K1.vec(m, i);
            Eigen::VectorXd b1 = s.b1.vec(m, i), b2 = s.b2.vec(m, i), g1 = s.g1.vec(m, i), g2 = s.g2.vec(m, i),
                            L1 = s.L1.vec(m, i), L2 = s.L2.vec(m, i);
            double phi = dec.phi.at(m, i), nu = dec.nu.at(m, i);
            double D = 1.0 / (1.0 - p.dot(g2));
            double w = D * (p.dot(b2) * phi + p.dot(L2) + nu);
            sol.Y.at(m, i) = p.dot(x) + phi;
            sol.Z.at(m, i) = K1.dot(x) + w;
            if (i == N) break;
            double px = p.dot(x), kx = K1.dot(x);
            Eigen::VectorXd drift = s.a1.mat(m, i) * x + b1 * px + g1 * kx + b1 * phi + L1 + g1 * w;
            Eigen::VectorXd diff = s.a2.mat(m, i) * x + b2 * px + g2 * kx + b2 * phi + L2 + g2 * w;
            x = x + drift * dt + diff * bundle.inc(m, i);
        }
    }
    sol.X.require_finite();
    return sol;
}

EstimateReport check_lbeta_estimate(const LinearFbsdeSolution& sol, const LinearFbsdeSpec& s,
                                    const MomentSpec& beta) {
    const double b = beta.beta;
    EstimateReport r;
    r.lhs = moment_norm(sol.X, {b, MomentSpec::Kind::SUP}).mean + moment_norm(sol.Y, {b, MomentSpec::Kind::SUP}).mean +
            moment_norm(sol.Z, {b, MomentSpec::Kind::INT2}).mean;
    const int M = sol.X.paths(), N = sol.X.grid().N;
    const double dt = sol.X.grid().dt();
    double vs = 0.0, l13 = 0.0;
    for (int m = 0; m < M; ++m) {
        vs += std::pow(std::abs(s.varsigma[m]), b);
        double acc = 0.0;
        for (int i = 0; i < N; ++i) acc += (Eigen::VectorXd(s.L1.vec(m, i)).norm() + std::abs(s.L3.at(m, i))) * dt;
        l13 += std::pow(acc, b);
    }
    r.rhs = std::pow(Eigen::VectorXd(s.x0).norm(), b) + vs / M + l13 / M +
            moment_norm(s.L2, {b, MomentSpec::Kind::INT2}).mean;
    r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
    return r;
}

}  // namespace fbsmp
