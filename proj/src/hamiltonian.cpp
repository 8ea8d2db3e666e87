#include "fbsmp/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fbsmp {

HamiltonianContext make_context(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                const SecondOrderAdjoint& adj2, int path, int node, const DeltaOpts& delta) {
    HamiltonianContext c;
    c.spec = &spec;
    c.t = sol.X.grid().t(node);
    c.x = sol.X.vec(path, node);
    c.y = sol.Y.at(path, node);
    c.z = sol.Z.at(path, node);
    c.ubar = sol.U.vec(path, node);
    c.p = adj1.p.vec(path, node);
    c.q = adj1.q.vec(path, node);
    c.P = adj2.P.mat(path, node);
    c.delta = delta;
    return c;
}

double eval_H(const HamiltonianContext& c, double z, const Vec& u) {
    const ProblemSpec& s = *c.spec;
    return c.p.dot(s.b(c.t, c.x, c.y, z, u)) + c.q.dot(s.sigma(c.t, c.x, c.y, z, u)) + s.g(c.t, c.x, c.y, z, u);
}

double eval_script_H(const HamiltonianContext& c, const Vec& u) {
    const ProblemSpec& s = *c.spec;
    DeltaPoint d = solve_delta_point(s, c.t, c.x, c.y, c.z, c.ubar, u, c.p, c.delta);
    const double zd = c.z + d.delta;
    Vec ds = s.sigma(c.t, c.x, c.y, zd, u) - s.sigma(c.t, c.x, c.y, c.z, c.ubar);
    return eval_H(c, zd, u) + 0.5 * ds.dot(c.P * ds);
}

double script_H_gap(const HamiltonianContext& c, const Vec& u) {
    if (u == c.ubar) return 0.0;
    return eval_script_H(c, u) - eval_script_H(c, c.ubar);
}

namespace {

struct Evaluated {
    double gap = 0.0, se = 0.0, z = 0.0;
};

Evaluated evaluate(const HamiltonianContext& c, const Vec& u, const Vec& p_se, const Vec& q_se, const Mat& P_se,
                   double floor) {
    Evaluated e;
    e.gap = script_H_gap(c, u);
    if (u == c.ubar) return e;
    // Finite perturbation of each adjoint block by its standard error.
    double var = 0.0;
    auto add = [&](HamiltonianContext pert) {
        double d = script_H_gap(pert, u) - e.gap;
        var += d * d;
    };
    if (p_se.norm() > 0.0) {
        HamiltonianContext pc = c;
        pc.p += p_se;
        add(pc);
    }
    if (q_se.norm() > 0.0) {
        HamiltonianContext pc = c;
        pc.q += q_se;
        add(pc);
    }
    if (P_se.norm() > 0.0) {
        HamiltonianContext pc = c;
        pc.P += P_se;
        add(pc);
    }
    e.se = std::sqrt(var);
    const double scale = 1.0 + std::abs(eval_H(c, c.z, c.ubar));
    if (std::abs(e.gap) <= floor * scale) e.gap = 0.0;
    if (e.se > 0.0) e.z = e.gap / e.se;
    else if (e.gap < 0.0) e.z = -std::numeric_limits<double>::infinity();
    else if (e.gap > 0.0) e.z = std::numeric_limits<double>::infinity();
    return e;
}

bool worse(const MpEntry& a, const MpEntry& b) {
    if (a.z != b.z) return a.z < b.z;
    return a.gap < b.gap;
}

}  // namespace

MpReport check_maximum_principle(const ProblemSpec& spec, const FbsdeSolution& sol, const FirstOrderAdjoint& adj1,
                                 const SecondOrderAdjoint& adj2, const MpOpts& opts) {
    if (opts.node_samples < 1 || opts.path_samples < 1)
        throw std::invalid_argument("mp check: node_samples and path_samples must be positive");
    const int N = sol.X.grid().N, M = sol.X.paths();
    const int ns = std::min(opts.node_samples, N), ps = std::min(opts.path_samples, M);
    const std::vector<Vec> grid_u = spec.control_set.sample();
    const bool box = spec.control_set.continuous();

    std::vector<int> nodes;
    for (int k = 0; k < ns; ++k) {
        int i = static_cast<int>(static_cast<long long>(k) * N / ns);
        if (nodes.empty() || nodes.back() != i) nodes.push_back(i);
    }

    MpReport rep;
    bool have_worst = false;
    auto record = [&](MpEntry e) {
        if (!have_worst || worse(e, rep.worst)) {
            rep.worst = e;
            have_worst = true;
        }
        ++rep.pairs;
        rep.entries.push_back(std::move(e));
    };

    for (int i : nodes) {
        for (int m = 0; m < ps; ++m) {
            HamiltonianContext c = make_context(spec, sol, adj1, adj2, m, i, opts.delta);
            const Vec p_se = adj1.p_se.vec(m, i), q_se = adj1.q_se.vec(m, i);
            const Mat P_se = adj2.P_se.mat(m, i);
            auto run = [&](const Vec& u, bool refined) {
                Evaluated ev = evaluate(c, u, p_se, q_se, P_se, opts.zero_floor);
                MpEntry e;
                e.node = i;
                e.path = m;
                e.t = c.t;
                e.u = u;
                e.gap = ev.gap;
                e.se = ev.se;
                e.z = ev.z;
                e.refined = refined;
                record(e);
                return ev.gap;
            };
            int best = -1;
            double best_gap = 0.0;
            for (std::size_t k = 0; k < grid_u.size(); ++k) {
                double g = run(grid_u[k], false);
                if (best < 0 || g < best_gap) {
                    best = static_cast<int>(k);
                    best_gap = g;
                }
            }
            if (!box || best < 0 || opts.refine_rounds <= 0) continue;
            // Coordinate bisection around the grid minimiser.
            const auto& cs = spec.control_set;
            Vec h = (cs.hi - cs.lo) / std::max(1, cs.grid_per_dim - 1);
            Vec cur = grid_u[best];
            for (int r = 0; r < opts.refine_rounds; ++r) {
                h *= 0.5;
                for (int d = 0; d < spec.k; ++d)
                    for (double sgn : {-1.0, 1.0}) {
                        Vec cand = cur;
                        cand[d] = std::clamp(cand[d] + sgn * h[d], cs.lo[d], cs.hi[d]);
                        if (cand == cur) continue;
                        double g = run(cand, true);
                        if (g < best_gap) {
                            best_gap = g;
                            cur = cand;
                        }
                    }
            }
        }
    }
    rep.min_z = have_worst ? rep.worst.z : 0.0;
    rep.min_gap = std::numeric_limits<double>::infinity();
    for (const auto& e : rep.entries) rep.min_gap = std::min(rep.min_gap, e.gap);
    if (rep.entries.empty()) rep.min_gap = 0.0;
    rep.pass = rep.min_z >= opts.z_threshold;
    return rep;
}

void write_mp_csv(const MpReport& rep, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    const int k = rep.entries.empty() ? 0 : static_cast<int>(rep.entries.front().u.size());
    os << "node,path,t";
    for (int d = 0; d < k; ++d) os << ",u_" << d;
    os << ",gap,stderr,z,refined\n";
    for (const auto& e : rep.entries) {
        os << e.node << ',' << e.path << ',' << fmt_double(e.t);
        for (int d = 0; d < k; ++d) os << ',' << fmt_double(e.u[d]);
        os << ',' << fmt_double(e.gap) << ',' << fmt_double(e.se) << ',' << fmt_double(e.z) << ','
           << (e.refined ? 1 : 0) << '\n';
    }
}

ConsistencyReport expansion_consistency(const OrderReport& rep) {
    ConsistencyReport out;
    std::vector<double> xs, ys;
    for (const auto& r : rep.records) {
        if (!r.ok) continue;
        ConsistencyRow row;
        row.eps = r.eps;
        row.J_diff = r.J_diff;
        row.J_diff_se = r.J_diff_se;
        row.Y2_0 = r.Y2_0;
        row.yhat_bsde = r.yhat_bsde;
        row.yhat_gamma = r.yhat_gamma;
        row.defect = r.defect;
        row.defect_over_eps = r.eps > 0.0 ? row.defect / r.eps : 0.0;
        out.max_defect_over_eps = std::max(out.max_defect_over_eps, row.defect_over_eps);
        xs.push_back(row.eps);
        ys.push_back(row.defect);
        out.rows.push_back(row);
    }
    out.defect_slope = fit_slope(xs, ys);
    out.defect_slope.norm = "defect";
    out.defect_slope.beta = 1.0;
    auto sorted = out.rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.eps > b.eps; });
    out.defect_over_eps_decreasing = sorted.size() > 1;
    for (std::size_t k = 1; k < sorted.size(); ++k)
        if (!(sorted[k].defect_over_eps < sorted[k - 1].defect_over_eps)) out.defect_over_eps_decreasing = false;
    return out;
}

ConsistencyReport expansion_consistency(const ProblemSpec& spec, const ControlLaw& ubar, const BrownianBundle& bundle,
                                        const OrderOpts& opts) {
    return expansion_consistency(run_order_experiment(spec, ubar, bundle, opts));
}

}  // namespace fbsmp
