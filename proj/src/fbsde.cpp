#include "fbsmp/fbsde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fbsmp/errors.hpp"

namespace fbsmp {

namespace {

Eigen::MatrixXd node_features(const Panel& F, int i) {
    Eigen::MatrixXd out(F.paths(), F.dim());
    for (int m = 0; m < F.paths(); ++m)
        for (int c = 0; c < F.dim(); ++c) out(m, c) = F.at(m, i, c);
    return out;
}

void check_step(const Panel& X, int i) {
    for (int m = 0; m < X.paths(); ++m)
        for (int k = 0; k < X.dim(); ++k)
            if (!std::isfinite(X.at(m, i, k)))
                throw NonFinite("forward simulation produced a non-finite value at path " + std::to_string(m) +
                                    ", node " + std::to_string(i),
                                m, i);
}

}  // namespace

Panel simulate_forward(const ProblemSpec& spec, const ControlLaw& control, const YZClosure* closures,
                       const BrownianBundle& bundle, Panel* U) {
    if (spec.forward_depends_on_yz && closures == nullptr)
        throw std::invalid_argument("simulate_forward: coupled forward equation needs (Y, Z) closures");
    const TimeGrid& grid = bundle.grid;
    const int M = bundle.M, N = grid.N, n = spec.n;
    const double dt = grid.dt();
    Panel X(grid, M, n, "X");
    Vec probe = control.value(0, 0, 0.0, spec.x0);
    if (U) *U = Panel(grid, M, static_cast<int>(probe.size()), "u");
    for (int m = 0; m < M; ++m) X.set(m, 0, spec.x0);
    for (int i = 0; i < N; ++i) {
        const double t = grid.t(i);
        for (int m = 0; m < M; ++m) {
            Vec x = X.vec(m, i);
            Vec u = control.value(m, i, t, x);
            if (U) U->set(m, i, u);
            double y = 0.0, z = 0.0;
            if (closures) closures->eval(m, i, x, y, z);
            Vec b = spec.b(t, x, y, z, u);
            Vec s = spec.sigma(t, x, y, z, u);
            X.set(m, i + 1, x + b * dt + s * bundle.inc(m, i));
        }
        check_step(X, i + 1);
    }
    if (U)
        for (int m = 0; m < M; ++m) U->set(m, N, control.value(m, N, grid.T, X.vec(m, N)));
    return X;
}

Panel stack_features(const std::vector<const Panel*>& parts) {
    int dim = 0;
    for (const Panel* p : parts) dim += p->dim();
    const Panel& first = *parts.front();
    Panel out(first.grid(), first.paths(), dim, "features");
    for (int m = 0; m < first.paths(); ++m)
        for (int i = 0; i < first.nodes(); ++i) {
            double* r = out.row(m, i);
            for (const Panel* p : parts) {
                const double* s = p->row(m, i);
                for (int k = 0; k < p->dim(); ++k) *r++ = s[k];
            }
        }
    return out;
}

BackwardResult backward_sweep(const BackwardProblem& prob, const Panel& features, const BrownianBundle& bundle,
                              BasisSpec basis, bool keep_functions) {
    const TimeGrid& grid = bundle.grid;
    const int M = bundle.M, N = grid.N, d = prob.dim;
    const double dt = grid.dt();
    BackwardResult res;
    res.Y = Panel(grid, M, d, "Y");
    res.Z = Panel(grid, M, d, "Z");
    res.Y_se = Panel(grid, M, d, "Y_se");
    res.Z_se = Panel(grid, M, d, "Z_se");
    if (keep_functions) {
        res.y_fn.resize(N);
        res.z_fn.resize(N);
    }

    // acc holds Y_T + sum_{j>i} f_j dt per path (multi-step target)
    // mdp always accumulates the multi-step sum; it supplies the Y(0) pseudo-values.
    Eigen::MatrixXd acc(M, d), mdp(M, d), y(M, d), z(M, d), f(M, d), target(M, d), pseudo(M, d);
    std::vector<double> buf(d);
    for (int m = 0; m < M; ++m) {
        prob.terminal(m, buf.data());
        for (int k = 0; k < d; ++k) {
            acc(m, k) = mdp(m, k) = buf[k];
            res.Y.at(m, N, k) = buf[k];
        }
    }

    auto apply_post = [&](Eigen::MatrixXd& v) {
        if (!prob.post) return;
        for (int m = 0; m < M; ++m) {
            for (int k = 0; k < d; ++k) buf[k] = v(m, k);
            prob.post(buf.data());
            for (int k = 0; k < d; ++k) v(m, k) = buf[k];
        }
    };
    auto eval_driver = [&](int i, const Eigen::MatrixXd& yy, const Eigen::MatrixXd& zz, Eigen::MatrixXd& out) {
        std::vector<double> ya(d), za(d), fa(d);
        for (int m = 0; m < M; ++m) {
            for (int k = 0; k < d; ++k) {
                ya[k] = yy(m, k);
                za[k] = zz(m, k);
            }
            prob.driver(m, i, ya.data(), za.data(), fa.data());
            for (int k = 0; k < d; ++k) out(m, k) = fa[k];
        }
    };

    Eigen::VectorXd a_vec(M);
    for (int i = N - 1; i >= 0; --i) {
        NodeRegression reg(node_features(features, i), basis.degree);
        res.ridge = res.ridge || reg.ridge();
        const double* dB = &bundle.dB[0];
        Eigen::VectorXd dBi(M);
        for (int m = 0; m < M; ++m) dBi[m] = dB[static_cast<std::size_t>(m) * N + i];
        // Z: project Y_{i+1} - E[Y_{i+1} | X_i] onto psi(X_i) dB.
        const NodeRegression::Weighted zreg = reg.weighted(dBi);
        res.ridge = res.ridge || zreg.ridge;
        Eigen::MatrixXd h(M, d);
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd next(M);
            for (int m = 0; m < M; ++m) next[m] = res.Y.at(m, i + 1, k);
            h.col(k) = reg.fitted(next);
            Eigen::VectorXd zt = next - h.col(k);
            z.col(k) = zreg.fitted(zt);
            Eigen::VectorXd zse = zreg.fitted_se(zt);
            for (int m = 0; m < M; ++m) res.Z_se.at(m, i, k) = zse[m];
            if (keep_functions) res.z_fn[i].push_back(zreg.function(zt));
        }
        apply_post(z);

        int iters = 1;
        if (prob.implicit_a) {
            Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(M, d);
            eval_driver(i, zero, z, f);
            for (int m = 0; m < M; ++m) a_vec[m] = prob.implicit_a(m, i);
            target = acc + f * dt;
            if (i == 0) pseudo = mdp + f * dt;
            for (int k = 0; k < d; ++k) {
                Eigen::VectorXd fit = reg.fitted(target.col(k));
                for (int m = 0; m < M; ++m) y(m, k) = fit[m] / (1.0 - a_vec[m] * dt);
            }
            apply_post(y);
            for (int m = 0; m < M; ++m)
                for (int k = 0; k < d; ++k) f(m, k) += a_vec[m] * y(m, k);
        } else {
            y = h;
            const int cap = prob.driver_uses_y ? prob.inner_max : 1;
            bool converged = !prob.driver_uses_y;
            for (iters = 1; iters <= cap; ++iters) {
                eval_driver(i, y, z, f);
                target = acc + f * dt;
                Eigen::MatrixXd ynew(M, d);
                for (int k = 0; k < d; ++k) ynew.col(k) = reg.fitted(target.col(k));
                apply_post(ynew);
                double change = (ynew - y).cwiseAbs().maxCoeff();
                double scale = std::max(1.0, ynew.cwiseAbs().maxCoeff());
                y = ynew;
                if (!prob.driver_uses_y) break;
                if (change <= prob.inner_tol * scale) {
                    converged = true;
                    break;
                }
            }
            iters = std::min(iters, cap);
            if (!converged) res.inner_converged = false;
            if (prob.driver_uses_y) {
                eval_driver(i, y, z, f);
                target = acc + f * dt;
            }
            if (i == 0) pseudo = mdp + f * dt;
            for (int m = 0; m < M; ++m) a_vec[m] = 0.0;
        }
        res.max_inner = std::max(res.max_inner, iters);
        for (int k = 0; k < d; ++k) {
            Eigen::VectorXd yse = reg.fitted_se(target.col(k));
            for (int m = 0; m < M; ++m) {
                res.Y.at(m, i, k) = y(m, k);
                res.Z.at(m, i, k) = z(m, k);
                res.Y_se.at(m, i, k) = yse[m] / std::abs(1.0 - a_vec[m] * dt);
            }
            if (keep_functions) res.y_fn[i].push_back(reg.function(target.col(k)));
        }
        mdp += f * dt;
        if (prob.multi_step) acc += f * dt;
        else acc = y;
    }
    // copy Z_{N-1} into the terminal node so Z panels have no artificial jump at T
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < d; ++k) res.Z.at(m, N, k) = res.Z.at(m, N - 1, k);

    res.y0.resize(d);
    res.y0_paths.resize(M, d);
    for (int k = 0; k < d; ++k) {
        // per-path pseudo-values whose mean is Y(0)
        double s = 0.0, s2 = 0.0;
        for (int m = 0; m < M; ++m) {
            double v = pseudo(m, k) / (1.0 - a_vec[m] * dt);
            res.y0_paths(m, k) = v;
            s += v;
            s2 += v * v;
        }
        res.y0[k].mean = res.Y.at(0, 0, k);
        double mean = s / M;
        res.y0[k].se = M > 1 ? std::sqrt(std::max(0.0, (s2 - M * mean * mean) / (M - 1)) / M) : 0.0;
    }
    res.Y.require_finite();
    res.Z.require_finite();
    return res;
}

BsdeResult solve_bsde_regression(const ProblemSpec& spec, const Panel& X, const Panel& U,
                                 const BrownianBundle& bundle, BasisSpec basis, const Panel* aux,
                                 bool multi_step) {
    BackwardProblem prob;
    prob.dim = 1;
    prob.terminal = [&](int m, double* yT) { *yT = spec.phi(X.vec(m, X.grid().N)); };
    prob.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        *f = spec.g(X.grid().t(i), X.vec(m, i), *y, *z, U.vec(m, i));
    };
    prob.driver_uses_y = spec.driver_depends_on_yz;
    prob.inner_max = 10;
    prob.inner_tol = 1e-10;
    prob.multi_step = multi_step;
    Panel feats = aux ? stack_features({&X, aux}) : X;
    BackwardResult r = backward_sweep(prob, feats, bundle, basis, true);
    BsdeResult out;
    out.Y = std::move(r.Y);
    out.Z = std::move(r.Z);
    out.Y_se = std::move(r.Y_se);
    out.Z_se = std::move(r.Z_se);
    out.y_fn.reserve(r.y_fn.size());
    for (auto& v : r.y_fn) out.y_fn.push_back(v[0]);
    for (auto& v : r.z_fn) out.z_fn.push_back(v[0]);
    out.y0 = r.y0[0];
    out.y0_paths = r.y0_paths.col(0);
    out.ridge = r.ridge;
    out.Y.set_label("Y");
    out.Z.set_label("Z");
    return out;
}

double sup_node_mean_abs(const Panel& a, const Panel& b) {
    double worst = 0.0;
    for (int i = 0; i < a.nodes(); ++i) {
        double s = 0.0;
        for (int m = 0; m < a.paths(); ++m) s += std::abs(a.at(m, i) - b.at(m, i));
        worst = std::max(worst, s / a.paths());
    }
    return worst;
}

namespace {

double sweep_residual(const Panel& X0, const Panel& Y0, const Panel& Z0, const Panel& X1, const Panel& Y1,
                      const Panel& Z1) {
    double worst = 0.0;
    const int M = X0.paths();
    for (int i = 0; i < X0.nodes(); ++i) {
        double s = 0.0;
        for (int m = 0; m < M; ++m) {
            for (int k = 0; k < X0.dim(); ++k) {
                double d = X1.at(m, i, k) - X0.at(m, i, k);
                s += d * d;
            }
            double dy = Y1.at(m, i) - Y0.at(m, i), dz = Z1.at(m, i) - Z0.at(m, i);
            s += dy * dy + dz * dz;
        }
        worst = std::max(worst, std::sqrt(s / M));
    }
    return worst;
}

struct NodeFns {
    std::vector<PolyFunction> y, z;
};

}  // namespace

FbsdeSolution solve_coupled_picard(const ProblemSpec& spec, const ControlLaw& control,
                                   const BrownianBundle& bundle, const PicardOpts& opts, const Panel* aux) {
    if (opts.max_sweeps < 1) throw std::invalid_argument("PicardOpts: max_sweeps must be positive");
    if (!(opts.damping > 0.0 && opts.damping <= 1.0))
        throw std::invalid_argument("PicardOpts: damping must lie in (0, 1]");
    const int N = bundle.grid.N, M = bundle.M, n = spec.n;
    const int na = aux ? aux->dim() : 0;
    BasisSpec basis{opts.basis_degree};

    FbsdeSolution sol;
    sol.opts = opts;
    double theta = opts.damping;

    std::shared_ptr<NodeFns> closure_fns;  // functions used by the forward pass
    auto make_closure = [&](std::shared_ptr<NodeFns> fns) {
        YZClosure c;
        c.eval = [fns, aux, n, na](int m, int i, const Vec& x, double& y, double& z) {
            double raw[64];
            for (int k = 0; k < n; ++k) raw[k] = x[k];
            for (int k = 0; k < na; ++k) raw[n + k] = aux->at(m, i, k);
            y = fns->y[i](raw);
            z = fns->z[i](raw);
        };
        return c;
    };
    auto zero_closure = [](int, int, const Vec&, double& y, double& z) { y = z = 0.0; };

    Panel Xp, Yp, Zp;
    double prev_res = 0.0;
    for (int sweep = 1; sweep <= opts.max_sweeps; ++sweep) {
        YZClosure closure;
        if (closure_fns) closure = make_closure(closure_fns);
        else closure.eval = zero_closure;
        Panel U;
        Panel X = simulate_forward(spec, control, &closure, bundle, &U);
        BsdeResult b = solve_bsde_regression(spec, X, U, bundle, basis, aux, opts.multi_step);
        sol.ridge = sol.ridge || b.ridge;
        sol.sweeps = sweep;

        bool done = false;
        if (!spec.forward_depends_on_yz) {
            // the forward pass ignores the closures, so one sweep is the fixed point
            sol.trace.push_back(0.0);
            done = true;
        } else if (sweep > 1) {
            double r = sweep_residual(Xp, Yp, Zp, X, b.Y, b.Z);
            sol.trace.push_back(r);
            if (!std::isfinite(r)) throw NonFinite("Picard residual is not finite", -1, -1);
            if (r < opts.tol) done = true;
            else if (opts.adaptive_damping && sweep > 2 && r > prev_res && theta > 1.0 / 64) {
                theta *= 0.5;
                sol.damping_adapted = true;
            }
            prev_res = r;
        }
        if (done) {
            sol.X = std::move(X);
            sol.Y = std::move(b.Y);
            sol.Z = std::move(b.Z);
            sol.Y_se = std::move(b.Y_se);
            sol.Z_se = std::move(b.Z_se);
            sol.U = std::move(U);
            sol.J = b.y0;
            sol.J_paths = std::move(b.y0_paths);
            sol.damping_used = theta;
            return sol;
        }

        // next closure: theta * new + (1 - theta) * previous closure, refit on the new X
        auto next = std::make_shared<NodeFns>();
        if (theta >= 1.0 || !closure_fns) {
            next->y = std::move(b.y_fn);
            next->z = std::move(b.z_fn);
        } else {
            Panel feats = aux ? stack_features({&X, aux}) : X;
            next->y.resize(N);
            next->z.resize(N);
            for (int i = 0; i < N; ++i) {
                Eigen::MatrixXd F(M, feats.dim());
                Eigen::VectorXd yd(M), zd(M);
                for (int m = 0; m < M; ++m) {
                    for (int c = 0; c < feats.dim(); ++c) F(m, c) = feats.at(m, i, c);
                    double yo, zo;
                    closure.eval(m, i, X.vec(m, i), yo, zo);
                    yd[m] = theta * b.Y.at(m, i) + (1.0 - theta) * yo;
                    zd[m] = theta * b.Z.at(m, i) + (1.0 - theta) * zo;
                }
                NodeRegression reg(F, opts.basis_degree);
                next->y[i] = reg.function(yd);
                next->z[i] = reg.function(zd);
            }
        }
        closure_fns = next;
        Xp = std::move(X);
        Yp = std::move(b.Y);
        Zp = std::move(b.Z);
    }
    throw NoConvergence("Picard iteration did not reach tol " + fmt_double(opts.tol) + " in " +
                            std::to_string(opts.max_sweeps) + " sweeps",
                        sol.trace);
}

}  // namespace fbsmp
