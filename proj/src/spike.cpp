#include "fbsmp/spike.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

#include "fbsmp/errors.hpp"
#include "node_cache.hpp"

namespace fbsmp {

SpikeSpec make_spike(const TimeGrid& grid, double t0, double eps, Vec u) {
    const double dt = grid.dt();
    const double tol = 1e-9 * std::max(1.0, grid.T);
    if (!(t0 >= 0.0) || !(eps >= 0.0)) throw std::invalid_argument("spike: t0 and eps must be non-negative");
    double a = std::round(t0 / dt), w = std::round(eps / dt);
    if (std::abs(a * dt - t0) > tol) throw std::invalid_argument("spike: t0 is not a multiple of dt");
    if (std::abs(w * dt - eps) > tol) throw std::invalid_argument("spike: eps is not a multiple of dt");
    SpikeSpec s;
    s.i0 = static_cast<int>(a);
    s.width = static_cast<int>(w);
    if (s.i0 + s.width > grid.N) throw std::invalid_argument("spike: window extends past T");
    s.u_value = std::move(u);
    return s;
}

Panel spiked_table(const Panel& ubar, const SpikeSpec& spike) {
    Panel out = ubar;
    for (int m = 0; m < ubar.paths(); ++m)
        for (int i = spike.i0; i < spike.i0 + spike.width; ++i) out.set(m, i, spike.u_at(m, i));
    out.set_label("u_spiked");
    return out;
}

const char* method_name(DeltaProcess::Method m) {
    switch (m) {
        case DeltaProcess::Method::CLOSED_FORM_SZ0: return "closed_form_sigma_z_zero";
        case DeltaProcess::Method::CLOSED_FORM_LINEAR: return "closed_form_linear_in_z";
        case DeltaProcess::Method::FIXED_POINT: return "fixed_point";
    }
    return "unknown";
}

DeltaPoint solve_delta_point(const ProblemSpec& spec, double t, const Vec& x, double y, double z, const Vec& ubar,
                             const Vec& u, const Vec& p, const DeltaOpts& opts) {
    const Vec s0 = spec.sigma(t, x, y, z, ubar);
    auto F = [&](double d) { return p.dot(spec.sigma(t, x, y, z + d, u) - s0); };
    DeltaPoint out;

    if (!opts.force_generic && spec.sigma_free_of_z) {
        out.method = DeltaProcess::Method::CLOSED_FORM_SZ0;
        out.delta = F(0.0);
        out.residual = std::abs(out.delta - F(out.delta));
        return out;
    }
    if (!opts.force_generic && spec.sigma_form == SigmaForm::LINEAR_IN_Z && spec.linear) {
        const double den = 1.0 - p.dot(spec.linear->A(t));
        if (std::abs(den) < opts.c_min)
            throw InvertibilityError("delta: |1 - <p, A>| below c_min", std::abs(den));
        out.method = DeltaProcess::Method::CLOSED_FORM_LINEAR;
        out.delta = p.dot(spec.linear->sigma1(t, x, y, u) - spec.linear->sigma1(t, x, y, ubar)) / den;
        out.residual = std::abs(out.delta - F(out.delta));
        return out;
    }

    out.method = DeltaProcess::Method::FIXED_POINT;
    double d = 0.0;
    for (int it = 1; it <= opts.cap; ++it) {
        double next = (1.0 - opts.damping) * d + opts.damping * F(d);
        out.iterations = it;
        if (!std::isfinite(next)) break;
        double step = std::abs(next - d);
        d = next;
        if (step <= opts.tol * std::max(1.0, std::abs(d))) {
            out.delta = d;
            out.residual = std::abs(d - F(d));
            if (out.residual <= opts.tol * std::max(1.0, std::abs(d))) return out;
            break;
        }
    }

    // Newton on G(d) = d - F(d), G'(d) = 1 - <p, sigma_z(z + d, u)>.
    out.newton = true;
    d = std::isfinite(d) ? d : 0.0;
    for (int it = 1; it <= opts.cap; ++it) {
        double G = d - F(d);
        double dG = 1.0 - p.dot(spec.sigma_z(t, x, y, z + d, u));
        if (std::abs(dG) < opts.c_min) throw InvertibilityError("delta: |1 - <p, sigma_z>| below c_min", std::abs(dG));
        double next = d - G / dG;
        ++out.iterations;
        bool small = std::abs(next - d) <= opts.tol * std::max(1.0, std::abs(next));
        d = next;
        if (small) {
            out.delta = d;
            out.residual = std::abs(d - F(d));
            return out;
        }
    }
    throw NoConvergence("delta: fixed point and Newton iterations did not converge");
}

DeltaProcess solve_delta(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                         const SpikeSpec& spike, const DeltaOpts& opts) {
    const int M = sol.X.paths(), N = sol.X.grid().N;
    DeltaProcess out;
    out.delta = Panel(sol.X.grid(), M, 1, "delta");
    out.residual = Panel(sol.X.grid(), M, 1, "delta_residual");
    if (!opts.force_generic && spec.sigma_free_of_z) out.method = DeltaProcess::Method::CLOSED_FORM_SZ0;
    else if (!opts.force_generic && spec.sigma_form == SigmaForm::LINEAR_IN_Z && spec.linear)
        out.method = DeltaProcess::Method::CLOSED_FORM_LINEAR;
    for (int i = 0; i < N; ++i) {
        if (!spike.in_window(i)) continue;
        const double t = sol.X.grid().t(i);
        for (int m = 0; m < M; ++m) {
            Vec x = sol.X.vec(m, i), ub = sol.U.vec(m, i), u = spike.u_at(m, i);
            DeltaPoint d = solve_delta_point(spec, t, x, sol.Y.at(m, i), sol.Z.at(m, i), ub, u, adj1.p.vec(m, i), opts);
            out.delta.at(m, i) = d.delta;
            out.residual.at(m, i) = d.residual;
            out.max_iterations = std::max(out.max_iterations, d.iterations);
            out.newton_used = out.newton_used || d.newton;
            out.max_residual = std::max(out.max_residual, d.residual);
            double scale = 1.0 + x.norm() + std::abs(sol.Y.at(m, i)) + u.norm() + ub.norm();
            out.growth_constant = std::max(out.growth_constant, std::abs(d.delta) / scale);
        }
    }
    out.delta.require_finite();
    return out;
}

namespace {

Vec quad_form(const std::vector<Mat>& H, const Vec& w) {
    Vec out(static_cast<int>(H.size()));
    for (std::size_t k = 0; k < H.size(); ++k) out[static_cast<int>(k)] = w.dot(H[k] * w);
    return out;
}

}  // namespace

VariationBundle simulate_variations(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                    const SecondOrderAdjoint& adj2, const YhatSolution& yhat,
                                    const SpikeSpec& spike, const DeltaProcess& delta, const BrownianBundle& bundle,
                                    BasisSpec basis, bool check_relations) {
    const TimeGrid& grid = sol.X.grid();
    const int M = sol.X.paths(), N = grid.N, n = spec.n;
    const double dt = grid.dt();
    VariationBundle v;
    v.X1 = Panel(grid, M, n, "X1");
    v.Y1 = Panel(grid, M, 1, "Y1");
    v.Z1 = Panel(grid, M, 1, "Z1");
    v.X2 = Panel(grid, M, n, "X2");
    v.Y2 = Panel(grid, M, 1, "Y2");
    v.Z2 = Panel(grid, M, 1, "Z2");
    v.I = Panel(grid, M, 1, "I");

    // Driver pieces of the variational BSDEs, filled during the forward pass.
    Panel f1(grid, M, 1), f2(grid, M, 1), gy(grid, M, 1), gz(grid, M, 1);

    JetCache cache(spec, sol);
    const Vec zn = Vec::Zero(n);
    const Mat znn = Mat::Zero(n, n);
    for (int i = 0; i < N; ++i) {
        const double t = grid.t(i);
        const bool in = spike.in_window(i);
        for (int m = 0; m < M; ++m) {
            const Jet& j = cache.at(m, i);
            const Vec p = adj1.p.vec(m, i), q = adj1.q.vec(m, i), K1 = adj1.K1.vec(m, i);
            const Mat P = adj2.P.mat(m, i), K2 = adj2.K2.mat(m, i);
            const Vec x = sol.X.vec(m, i), ub = sol.U.vec(m, i);
            const double y = sol.Y.at(m, i), z = sol.Z.at(m, i);
            const Vec x1 = v.X1.vec(m, i), x2 = v.X2.vec(m, i);
            const double y1 = p.dot(x1), k1x = K1.dot(x1);
            const double del = delta.delta.at(m, i);

            Vec db = zn, ds = zn, dsy = zn, dsz = zn;
            Mat dsx = znn;
            double dg = 0.0;
            if (in) {
                Jet jE = eval_jet(spec, t, x, y, z + del, spike.u_at(m, i));
                db = jE.b - j.b;
                ds = jE.s - j.s;
                dsx = jE.sx - j.sx;
                dsy = jE.sy - j.sy;
                dsz = jE.sz - j.sz;
                dg = jE.g - j.g;
            }

            const double yh = yhat.Yhat.at(m, i), zh = yhat.Zhat.at(m, i);
            const double inv = 1.0 / (1.0 - p.dot(j.sz));
            double Iv = K1.dot(x2) + 0.5 * x1.dot(K2 * x1) + inv * p.dot(j.sy * yh + j.sz * zh);
            if (in) Iv += (P * ds).dot(x1) + inv * p.dot(dsx * x1) + inv * p.dot(dsy * y1 + dsz * k1x);
            const double y2 = p.dot(x2) + 0.5 * x1.dot(P * x1) + yh;
            const double z2 = Iv + zh;

            v.Y1.at(m, i) = y1;
            v.Z1.at(m, i) = k1x + del;
            v.Y2.at(m, i) = y2;
            v.Z2.at(m, i) = z2;
            v.I.at(m, i) = Iv;

            Vec w(n + 2);
            w << x1, y1, k1x;
            Vec qb = quad_form(spec.b_hess(t, x, y, z, ub), w);
            Vec qs = quad_form(spec.sigma_hess(t, x, y, z, ub), w);
            const double qg = w.dot(spec.g_hess(t, x, y, z, ub) * w);

            Vec drift1 = j.bx * x1 + j.by * y1 + j.bz * k1x;
            Vec diff1 = j.sx * x1 + j.sy * y1 + j.sz * k1x + ds;
            Vec drift2 = j.bx * x2 + j.by * y2 + j.bz * z2 + db + 0.5 * qb;
            Vec diff2 = j.sx * x2 + j.sy * y2 + 0.5 * qs + j.sz * z2 + dsx * x1 + dsy * y1 + dsz * k1x;
            const double dB = bundle.inc(m, i);
            v.X1.set(m, i + 1, x1 + drift1 * dt + diff1 * dB);
            v.X2.set(m, i + 1, x2 + drift2 * dt + diff2 * dB);

            const double qds = q.dot(ds);
            f1.at(m, i) = j.gx.dot(x1) - j.gz * del - qds;
            f2.at(m, i) = j.gx.dot(x2) + qds + dg + 0.5 * qg;
            gy.at(m, i) = j.gy;
            gz.at(m, i) = j.gz;
        }
    }
    for (int m = 0; m < M; ++m) {
        const Vec x1 = v.X1.vec(m, N), x2 = v.X2.vec(m, N);
        v.Y1.at(m, N) = adj1.p.vec(m, N).dot(x1);
        v.Y2.at(m, N) = adj1.p.vec(m, N).dot(x2) + 0.5 * x1.dot(adj2.P.mat(m, N) * x1) + yhat.Yhat.at(m, N);
        v.Z1.at(m, N) = v.Z1.at(m, N - 1);
        v.Z2.at(m, N) = v.Z2.at(m, N - 1);
        v.I.at(m, N) = v.I.at(m, N - 1);
    }
    for (const Panel* P : {&v.X1, &v.X2, &v.Y1, &v.Y2, &v.Z1, &v.Z2}) P->require_finite();
    v.Y2_0 = yhat.y0_bsde.mean;

    v.y1_paths.resize(M);
    v.y2_paths.resize(M);
    for (int m = 0; m < M; ++m) {
        const Vec xN = sol.X.vec(m, N), x1 = v.X1.vec(m, N);
        const Vec px = spec.phi_x(xN);
        double s1 = px.dot(x1), s2 = px.dot(v.X2.vec(m, N)) + 0.5 * x1.dot(spec.phi_xx(xN) * x1);
        for (int i = 0; i < N; ++i) {
            s1 += (f1.at(m, i) + gy.at(m, i) * v.Y1.at(m, i) + gz.at(m, i) * v.Z1.at(m, i)) * dt;
            s2 += (f2.at(m, i) + gy.at(m, i) * v.Y2.at(m, i) + gz.at(m, i) * v.Z2.at(m, i)) * dt;
        }
        v.y1_paths[m] = s1;
        v.y2_paths[m] = s2;
    }

    if (!check_relations) return v;

    BackwardProblem b1;
    b1.dim = 1;
    b1.terminal = [&](int m, double* yT) { *yT = spec.phi_x(sol.X.vec(m, N)).dot(v.X1.vec(m, N)); };
    b1.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        *f = f1.at(m, i) + gy.at(m, i) * *y + gz.at(m, i) * *z;
    };
    b1.driver_uses_y = spec.driver_depends_on_yz;
    v.Y1_bsde = backward_sweep(b1, stack_features({&sol.X, &v.X1}), bundle, basis).Y;

    BackwardProblem b2 = b1;
    b2.terminal = [&](int m, double* yT) {
        const Vec xN = sol.X.vec(m, N), x1 = v.X1.vec(m, N);
        *yT = spec.phi_x(xN).dot(v.X2.vec(m, N)) + 0.5 * x1.dot(spec.phi_xx(xN) * x1);
    };
    b2.driver = [&](int m, int i, const double* y, const double* z, double* f) {
        *f = f2.at(m, i) + gy.at(m, i) * *y + gz.at(m, i) * *z;
    };
    v.Y2_bsde = backward_sweep(b2, stack_features({&sol.X, &v.X1, &v.X2}), bundle, basis).Y;

    v.relation1 = sup_node_mean_abs(v.Y1_bsde, v.Y1);
    v.relation2 = sup_node_mean_abs(v.Y2_bsde, v.Y2);
    v.relations_checked = true;
    return v;
}

SpikeDiffs spike_diffs(const FbsdeSolution& spiked, const FbsdeSolution& ref, const VariationBundle& v) {
    SpikeDiffs d;
    auto diff = [](const Panel& a, const Panel& b, const char* label) {
        Panel out = a;
        auto& o = out.values();
        const auto& bv = b.values();
        for (std::size_t k = 0; k < o.size(); ++k) o[k] -= bv[k];
        out.set_label(label);
        return out;
    };
    d.xi[0] = diff(spiked.X, ref.X, "xi1");
    d.eta[0] = diff(spiked.Y, ref.Y, "eta1");
    d.zeta[0] = diff(spiked.Z, ref.Z, "zeta1");
    d.xi[1] = diff(d.xi[0], v.X1, "xi2");
    d.eta[1] = diff(d.eta[0], v.Y1, "eta2");
    d.zeta[1] = diff(d.zeta[0], v.Z1, "zeta2");
    d.xi[2] = diff(d.xi[1], v.X2, "xi3");
    d.eta[2] = diff(d.eta[1], v.Y2, "eta3");
    d.zeta[2] = diff(d.zeta[1], v.Z2, "zeta3");
    return d;
}

const SlopeFit* OrderReport::slope(const std::string& norm, double beta) const {
    for (const auto& s : slopes)
        if (s.norm == norm && s.beta == beta) return &s;
    return nullptr;
}

SlopeFit fit_slope(const std::vector<double>& eps, const std::vector<double>& values) {
    SlopeFit f;
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < eps.size() && k < values.size(); ++k)
        if (eps[k] > 0.0 && values[k] > 0.0 && std::isfinite(values[k])) {
            lx.push_back(std::log(eps[k]));
            ly.push_back(std::log(values[k]));
        }
    const int n = static_cast<int>(lx.size());
    f.points = n;
    if (n < 2) return f;
    double mx = 0.0, my = 0.0;
    for (int k = 0; k < n; ++k) {
        mx += lx[k];
        my += ly[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (int k = 0; k < n; ++k) {
        sxx += (lx[k] - mx) * (lx[k] - mx);
        sxy += (lx[k] - mx) * (ly[k] - my);
    }
    if (!(sxx > 0.0)) return f;
    f.slope = sxy / sxx;
    f.valid = true;
    if (n > 2) {
        double rss = 0.0;
        for (int k = 0; k < n; ++k) {
            double r = ly[k] - my - f.slope * (lx[k] - mx);
            rss += r * r;
        }
        double se = std::sqrt(rss / (n - 2) / sxx);
        boost::math::students_t dist(n - 2);
        f.half_width = boost::math::quantile(boost::math::complement(dist, 0.025)) * se;
    }
    return f;
}

std::vector<double> default_ladder(double T) {
    std::vector<double> out;
    for (int k = 4; k <= 8; ++k) out.push_back(T * std::ldexp(1.0, -k));
    return out;
}

namespace {

struct NormDef {
    std::string name;
    MomentSpec::Kind kind;
};

const std::vector<NormDef>& norm_defs() {
    static const std::vector<NormDef> defs = {
        {"xi1", MomentSpec::Kind::SUP},   {"eta1", MomentSpec::Kind::SUP},  {"zeta1", MomentSpec::Kind::INT2},
        {"X1", MomentSpec::Kind::SUP},    {"Y1", MomentSpec::Kind::SUP},    {"Z1", MomentSpec::Kind::INT2},
        {"xi2", MomentSpec::Kind::SUP},   {"eta2", MomentSpec::Kind::SUP},  {"zeta2", MomentSpec::Kind::INT2},
        {"xi3", MomentSpec::Kind::SUP},   {"eta3", MomentSpec::Kind::SUP},  {"zeta3", MomentSpec::Kind::INT2},
    };
    return defs;
}

const Panel& pick(const std::string& name, const SpikeDiffs& d, const VariationBundle& v) {
    if (name == "X1") return v.X1;
    if (name == "Y1") return v.Y1;
    if (name == "Z1") return v.Z1;
    const int k = name.back() - '1';
    if (name.rfind("xi", 0) == 0) return d.xi[k];
    if (name.rfind("eta", 0) == 0) return d.eta[k];
    return d.zeta[k];
}

Estimate paired_mean(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const int M = static_cast<int>(a.size());
    Eigen::VectorXd d = a - b;
    Estimate e;
    e.mean = d.mean();
    e.se = M > 1 ? std::sqrt((d.array() - e.mean).square().sum() / (M - 1) / M) : 0.0;
    return e;
}

}  // namespace

OrderReport run_order_experiment(const ProblemSpec& spec, const ControlLaw& ubar, const BrownianBundle& bundle,
                                 const OrderOpts& opts) {
    if (opts.ladder.empty()) throw std::invalid_argument("order experiment: empty epsilon ladder");
    if (opts.u.size() != spec.k) throw std::invalid_argument("order experiment: spike value has wrong dimension");
    const TimeGrid& grid = bundle.grid;
    const double t0 = opts.t0 >= 0.0 ? opts.t0 : spec.T / 4.0;
    BasisSpec basis{opts.picard.basis_degree};

    OrderReport rep;
    rep.problem = spec.name;

    // The reference is replayed open-loop from its own control table so that a null spike
    // reproduces it exactly.
    FbsdeSolution base = solve_coupled_picard(spec, ubar, bundle, opts.picard);
    const Panel Xbar = base.X;
    const Panel* aux = opts.reference_features ? &Xbar : nullptr;
    const ControlLaw ubar_tab = ControlLaw::open_loop(base.U);
    FbsdeSolution ref = solve_coupled_picard(spec, ubar_tab, bundle, opts.picard, aux);
    rep.J_ref = ref.J.mean;

    FirstOrderAdjoint adj1 = solve_first_order_adjoint(spec, ref, bundle, opts.adjoint);
    SecondOrderAdjoint adj2 = solve_second_order_adjoint(spec, ref, adj1, bundle, opts.adjoint);
    GammaProcess gamma = solve_gamma(spec, ref, adj1, bundle);

    DeltaOpts dopts = opts.delta;
    dopts.c_min = opts.adjoint.c_min;

    for (double eps : opts.ladder) {
        EpsilonRecord rec;
        rec.eps = eps;
        try {
            SpikeSpec spike = make_spike(grid, t0, eps, opts.u);
            DeltaProcess delta = solve_delta(spec, ref, adj1, spike, dopts);
            YhatSolution yh = solve_yhat(spec, ref, adj1, adj2, gamma, spike, delta, bundle, basis);
            VariationBundle var = simulate_variations(spec, ref, adj1, adj2, yh, spike, delta, bundle, basis,
                                                      opts.check_relations);
            FbsdeSolution sp = solve_coupled_picard(
                spec, ControlLaw::open_loop(spiked_table(ref.U, spike)), bundle, opts.picard, aux);
            SpikeDiffs diffs = spike_diffs(sp, ref, var);

            Estimate jd = paired_mean(sp.J_paths, ref.J_paths);
            rec.J_diff = jd.mean;
            rec.J_diff_se = jd.se;
            rec.Y2_0 = var.Y2_0;
            rec.yhat_bsde = yh.y0_bsde;
            rec.yhat_gamma = yh.y0_gamma;
            if (var.relations_checked) {
                rec.relation1 = var.relation1;
                rec.relation2 = var.relation2;
            }
            rec.delta_residual = delta.max_residual;
            rec.delta_method = method_name(delta.method);
            rec.sweeps = sp.sweeps;
            rec.damping_adapted = sp.damping_adapted;

            for (double beta : opts.betas)
                for (const auto& nd : norm_defs())
                    rep.rows.push_back({eps, nd.name, beta, moment_norm(pick(nd.name, diffs, var), {beta, nd.kind})});
            Estimate dcv = paired_mean(sp.J_paths - ref.J_paths - var.y1_paths, var.y2_paths);
            rec.defect = std::abs(dcv.mean);
            rec.defect_se = dcv.se;
            rec.defect_plain = std::abs(jd.mean - var.Y2_0);
            rep.rows.push_back({eps, "defect", 1.0, {rec.defect, rec.defect_se}});
            rep.rows.push_back({eps, "defect_plain", 1.0,
                                {rec.defect_plain, std::sqrt(jd.se * jd.se + yh.y0_bsde.se * yh.y0_bsde.se)}});
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rep.records.push_back(rec);
    }

    // Slopes over the successful epsilons; the largest one is dropped if its solve needed damping.
    double largest = -1.0;
    bool drop = false;
    for (const auto& r : rep.records)
        if (r.ok && r.eps > largest) {
            largest = r.eps;
            drop = r.damping_adapted;
        }
    std::vector<std::pair<std::string, double>> keys;
    for (const auto& row : rep.rows) {
        auto key = std::make_pair(row.norm, row.beta);
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
    }
    for (const auto& key : keys) {
        std::vector<double> xs, ys;
        for (const auto& row : rep.rows)
            if (row.norm == key.first && row.beta == key.second && !(drop && row.eps == largest)) {
                xs.push_back(row.eps);
                ys.push_back(row.est.mean);
            }
        SlopeFit f = fit_slope(xs, ys);
        f.norm = key.first;
        f.beta = key.second;
        f.dropped_largest = drop;
        rep.slopes.push_back(f);
    }
    return rep;
}

void write_order_csv(const OrderReport& rep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "epsilon,norm,beta,estimate,stderr\n";
    for (const auto& r : rep.rows)
        os << fmt_double(r.eps) << ',' << r.norm << ',' << fmt_double(r.beta) << ',' << fmt_double(r.est.mean) << ','
           << fmt_double(r.est.se) << '\n';
}

void write_slopes_csv(const OrderReport& rep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "norm,beta,slope,half_width,points,dropped_largest\n";
    for (const auto& s : rep.slopes)
        os << s.norm << ',' << fmt_double(s.beta) << ',' << fmt_double(s.slope) << ',' << fmt_double(s.half_width)
           << ',' << s.points << ',' << (s.dropped_largest ? 1 : 0) << '\n';
}

}  // namespace fbsmp
