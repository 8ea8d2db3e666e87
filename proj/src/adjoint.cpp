#include "fbsmp/adjoint.hpp"

#include <algorithm>
#include <cmath>

#include "fbsmp/errors.hpp"
#include "node_cache.hpp"

namespace fbsmp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

Panel features_for(const FbsdeSolution& sol, const Panel* aux) {
    return aux ? stack_features({&sol.X, aux}) : sol.X;
}

Eigen::VectorXd first_order_K1(const Jet& j, const Eigen::VectorXd& p, const Eigen::VectorXd& q, double& den) {
    den = 1.0 - p.dot(Eigen::VectorXd(j.sz));
    double d = std::abs(den) < 1e-300 ? 1e-300 : den;
    return (j.sx.transpose() * p + p.dot(Eigen::VectorXd(j.sy)) * p + q) / d;
}

// Per-path quantities of the second-order generator at one node.
struct SecondOrderTerms {
    Eigen::MatrixXd dsS, dbS, d2H, pd2s;
    double Hy = 0.0, Hz = 0.0, inv = 1.0, p_sy = 0.0;
};

SecondOrderTerms second_order_terms(const ProblemSpec& spec, const FbsdeSolution& sol, const Jet& j,
                                    const Eigen::VectorXd& p, const Eigen::VectorXd& q, const Eigen::VectorXd& K1,
                                    int m, int i) {
    const int n = spec.n;
    SecondOrderTerms s;
    Eigen::VectorXd sy = j.sy, sz = j.sz, by = j.by, bz = j.bz;
    s.dsS = j.sx + sy * p.transpose() + sz * K1.transpose();
    s.dbS = j.bx + by * p.transpose() + bz * K1.transpose();
    s.Hy = j.gy + p.dot(by) + q.dot(sy);
    s.Hz = j.gz + p.dot(bz) + q.dot(sz);
    s.p_sy = p.dot(sy);
    s.inv = 1.0 / (1.0 - p.dot(sz));
    const double t = sol.X.grid().t(i);
    Vec x = sol.X.vec(m, i);
    double y = sol.Y.at(m, i), z = sol.Z.at(m, i);
    Vec u = sol.U.vec(m, i);
    auto Hb = spec.b_hess(t, x, y, z, u);
    auto Hs = spec.sigma_hess(t, x, y, z, u);
    Eigen::MatrixXd D2H = spec.g_hess(t, x, y, z, u);
    Eigen::MatrixXd D2s = Eigen::MatrixXd::Zero(n + 2, n + 2);
    for (int k = 0; k < n; ++k) {
        D2H += p[k] * Eigen::MatrixXd(Hb[k]) + q[k] * Eigen::MatrixXd(Hs[k]);
        D2s += p[k] * Eigen::MatrixXd(Hs[k]);
    }
    Eigen::MatrixXd S(n + 2, n);
    S.topRows(n).setIdentity();
    S.row(n) = p.transpose();
    S.row(n + 1) = K1.transpose();
    s.d2H = S.transpose() * D2H * S;
    s.pd2s = S.transpose() * D2s * S;
    return s;
}

}  // namespace

FirstOrderAdjoint solve_first_order_adjoint(const ProblemSpec& spec, const FbsdeSolution& sol,
                                            const BrownianBundle& bundle, const AdjointOpts& opts,
                                            const Panel* aux) {
    const int n = spec.n, M = sol.X.paths(), N = sol.X.grid().N;
    JetCache cache(spec, sol);
    BackwardProblem pp;
    pp.dim = n;
    pp.terminal = [&](int m, double* yT) {
        Vec g = spec.phi_x(sol.X.vec(m, N));
        for (int k = 0; k < n; ++k) yT[k] = g[k];
    };
    pp.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        const Jet& j = cache.at(m, i);
        Eigen::VectorXd p = CVecMap(y, n), q = CVecMap(z, n);
        double den;
        Eigen::VectorXd K1 = first_order_K1(j, p, q, den);
        Eigen::VectorXd by = j.by, bz = j.bz, sy = j.sy, sz = j.sz;
        Eigen::VectorXd F = Eigen::VectorXd(j.gx) + j.gy * p + j.gz * K1 + j.bx.transpose() * p + p.dot(by) * p +
                            p.dot(bz) * K1 + j.sx.transpose() * q + q.dot(sy) * p + q.dot(sz) * K1;
        for (int k = 0; k < n; ++k) f[k] = F[k];
    };
    pp.driver_uses_y = true;
    pp.inner_max = opts.inner_max;
    pp.inner_tol = opts.inner_tol;
    BackwardResult r = backward_sweep(pp, features_for(sol, aux), bundle, {opts.basis_degree});

    FirstOrderAdjoint a;
    a.p = std::move(r.Y);
    a.q = std::move(r.Z);
    a.p_se = std::move(r.Y_se);
    a.q_se = std::move(r.Z_se);
    a.p.set_label("p");
    a.q.set_label("q");
    a.max_inner = r.max_inner;
    a.ridge = r.ridge;
    a.K1 = Panel(sol.X.grid(), M, n, "K1");
    a.margin = INFINITY;
    JetCache fwd(spec, sol);
    for (int i = 0; i <= N; ++i) {
        for (int m = 0; m < M; ++m) {
            const Jet& j = fwd.at(m, i);
            Eigen::VectorXd p = a.p.vec(m, i), q = a.q.vec(m, i);
            double den;
            Eigen::VectorXd K1 = first_order_K1(j, p, q, den);
            a.margin = std::min(a.margin, std::abs(den));
            if (std::abs(den) < opts.c_min)
                throw InvertibilityError("|1 - <p, sigma_z>| = " + fmt_double(std::abs(den)) +
                                             " below c_min at path " + std::to_string(m) + ", node " +
                                             std::to_string(i),
                                         std::abs(den));
            a.K1.set(m, i, K1);
            Eigen::VectorXd id = den * K1 - j.sx.transpose() * p - p.dot(Eigen::VectorXd(j.sy)) * p - q;
            a.k1_identity = std::max(a.k1_identity, id.cwiseAbs().maxCoeff());
            a.max_abs_q = std::max(a.max_abs_q, q.cwiseAbs().maxCoeff());
        }
    }
    return a;
}

SecondOrderAdjoint solve_second_order_adjoint(const ProblemSpec& spec, const FbsdeSolution& sol,
                                              const FirstOrderAdjoint& adj1, const BrownianBundle& bundle,
                                              const AdjointOpts& opts, const Panel* aux) {
    const int n = spec.n, M = sol.X.paths(), N = sol.X.grid().N;
    JetCache cache(spec, sol);
    std::vector<SecondOrderTerms> terms;
    int terms_node = -1;
    auto node_terms = [&](int m, int i) -> const SecondOrderTerms& {
        if (i != terms_node) {
            terms.resize(M);
            for (int mm = 0; mm < M; ++mm)
                terms[mm] = second_order_terms(spec, sol, cache.at(mm, i), adj1.p.vec(mm, i), adj1.q.vec(mm, i),
                                               adj1.K1.vec(mm, i), mm, i);
            terms_node = i;
        }
        return terms[m];
    };
    auto K2_of = [&](const SecondOrderTerms& s, const RowMat& P, const RowMat& Q) -> Eigen::MatrixXd {
        return s.inv * (s.p_sy * P + s.dsS.transpose() * P + P * s.dsS + Q + s.pd2s);
    };

    BackwardProblem bp;
    bp.dim = n * n;
    bp.terminal = [&](int m, double* yT) {
        Mat H = spec.phi_xx(sol.X.vec(m, N));
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) yT[a * n + b] = 0.5 * (H(a, b) + H(b, a));
    };
    bp.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        const SecondOrderTerms& s = node_terms(m, i);
        RowMat P = Eigen::Map<const RowMat>(y, n, n), Q = Eigen::Map<const RowMat>(z, n, n);
        Eigen::MatrixXd K2 = K2_of(s, P, Q);
        Eigen::MatrixXd G = s.dsS.transpose() * P * s.dsS + P * s.dbS + s.dbS.transpose() * P + P * s.Hy +
                            Q * s.dsS + s.dsS.transpose() * Q + s.d2H + s.Hz * K2;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) f[a * n + b] = G(a, b);
    };
    bp.post = [n](double* y) {
        for (int a = 0; a < n; ++a)
            for (int b = a + 1; b < n; ++b) {
                double v = 0.5 * (y[a * n + b] + y[b * n + a]);
                y[a * n + b] = y[b * n + a] = v;
            }
    };
    bp.driver_uses_y = true;
    bp.inner_max = opts.inner_max;
    bp.inner_tol = opts.inner_tol;
    BackwardResult r = backward_sweep(bp, features_for(sol, aux), bundle, {opts.basis_degree});

    SecondOrderAdjoint out;
    out.P = std::move(r.Y);
    out.Q = std::move(r.Z);
    out.P_se = std::move(r.Y_se);
    out.P.set_label("P");
    out.Q.set_label("Q");
    out.max_inner = r.max_inner;
    out.ridge = r.ridge;
    out.K2 = Panel(sol.X.grid(), M, n * n, "K2");
    out.Hy = Panel(sol.X.grid(), M, 1, "H_y");
    out.Hz = Panel(sol.X.grid(), M, 1, "H_z");
    for (int i = 0; i <= N; ++i) {
        for (int m = 0; m < M; ++m) {
            const SecondOrderTerms& s = node_terms(m, i);
            RowMat P = Eigen::Map<const RowMat>(out.P.row(m, i), n, n);
            RowMat Q = Eigen::Map<const RowMat>(out.Q.row(m, i), n, n);
            out.max_asymmetry = std::max(out.max_asymmetry, (P - P.transpose()).cwiseAbs().maxCoeff());
            out.K2.set_mat(m, i, K2_of(s, P, Q));
            out.Hy.at(m, i) = s.Hy;
            out.Hz.at(m, i) = s.Hz;
        }
    }
    return out;
}

GammaProcess stochastic_exponential(const Panel& a, const Panel& c, const BrownianBundle& bundle) {
    const int M = bundle.M, N = bundle.grid.N;
    const double dt = bundle.grid.dt();
    GammaProcess g;
    g.drift = a;
    g.diffusion = c;
    g.gamma = Panel(bundle.grid, M, 1, "gamma");
    for (int m = 0; m < M; ++m) {
        double lg = 0.0;
        g.gamma.at(m, 0) = 1.0;
        for (int i = 0; i < N; ++i) {
            double ai = a.at(m, i), ci = c.at(m, i);
            double den = 1.0 - ai * dt;
            if (!(den > 0.0)) throw NonFinite("gamma: 1 - a dt is not positive", m, i);
            lg += -std::log(den) + ci * bundle.inc(m, i) - 0.5 * ci * ci * dt;
            g.gamma.at(m, i + 1) = std::exp(lg);
        }
    }
    g.gamma.require_finite();
    return g;
}

GammaProcess solve_gamma(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                         const BrownianBundle& bundle) {
    const int M = sol.X.paths(), N = sol.X.grid().N;
    JetCache cache(spec, sol);
    Panel a(sol.X.grid(), M, 1, "gamma_drift"), c(sol.X.grid(), M, 1, "gamma_diffusion");
    for (int i = 0; i <= N; ++i)
        for (int m = 0; m < M; ++m) {
            const Jet& j = cache.at(m, i);
            Eigen::VectorXd p = adj1.p.vec(m, i), q = adj1.q.vec(m, i);
            Eigen::VectorXd by = j.by, bz = j.bz, sy = j.sy, sz = j.sz;
            double inv = 1.0 / (1.0 - p.dot(sz));
            double Hy = j.gy + p.dot(by) + q.dot(sy);
            double Hz = j.gz + p.dot(bz) + q.dot(sz);
            a.at(m, i) = Hy + inv * j.gz * p.dot(sy);
            c.at(m, i) = Hz + inv * j.gz * p.dot(sz);
        }
    return stochastic_exponential(a, c, bundle);
}

double spike_forcing(const ProblemSpec& spec, double t, const Vec& x, double y, double z, const Vec& ubar,
                     const Vec& u, double delta, const Vec& p, const Vec& q, const Mat& P) {
    Vec db = spec.b(t, x, y, z + delta, u) - spec.b(t, x, y, z, ubar);
    Vec ds = spec.sigma(t, x, y, z + delta, u) - spec.sigma(t, x, y, z, ubar);
    double dg = spec.g(t, x, y, z + delta, u) - spec.g(t, x, y, z, ubar);
    return p.dot(db) + q.dot(ds) + dg + 0.5 * ds.dot(P * ds);
}

YhatSolution solve_yhat(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                        const SecondOrderAdjoint& adj2, const GammaProcess& gamma, const SpikeSpec& spike,
                        const DeltaProcess& delta, const BrownianBundle& bundle, BasisSpec basis,
                        const Panel* aux) {
    const int M = sol.X.paths(), N = sol.X.grid().N;
    const double dt = sol.X.grid().dt();
    YhatSolution out;
    out.forcing = Panel(sol.X.grid(), M, 1, "yhat_forcing");
    for (int i = 0; i < N; ++i) {
        if (!spike.in_window(i)) continue;
        const double t = sol.X.grid().t(i);
        for (int m = 0; m < M; ++m)
            out.forcing.at(m, i) = spike_forcing(spec, t, sol.X.vec(m, i), sol.Y.at(m, i), sol.Z.at(m, i),
                                                 sol.U.vec(m, i), spike.u_at(m, i), delta.delta.at(m, i),
                                                 adj1.p.vec(m, i), adj1.q.vec(m, i), adj2.P.mat(m, i));
    }
    out.forcing.require_finite();

    BackwardProblem bp;
    bp.dim = 1;
    bp.terminal = [](int, double* yT) { *yT = 0.0; };
    bp.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        *f = gamma.drift.at(m, i) * *y + gamma.diffusion.at(m, i) * *z + out.forcing.at(m, i);
    };
    bp.implicit_a = [&](int m, int i) { return gamma.drift.at(m, i); };
    BackwardResult r = backward_sweep(bp, features_for(sol, aux), bundle, basis);
    out.Yhat = std::move(r.Y);
    out.Zhat = std::move(r.Z);
    out.Yhat.set_label("Yhat");
    out.Zhat.set_label("Zhat");
    out.y0_bsde = r.y0[0];

    double s = 0.0, s2 = 0.0;
    for (int m = 0; m < M; ++m) {
        double v = 0.0;
        for (int i = 0; i < N; ++i)
            v += gamma.gamma.at(m, i) * out.forcing.at(m, i) * dt / (1.0 - gamma.drift.at(m, i) * dt);
        s += v;
        s2 += v * v;
    }
    out.y0_gamma.mean = s / M;
    out.y0_gamma.se = M > 1 ? std::sqrt(std::max(0.0, (s2 - M * out.y0_gamma.mean * out.y0_gamma.mean) / (M - 1)) / M)
                            : 0.0;
    return out;
}

}  // namespace fbsmp
