#include "fbsmp/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "fbsmp/acceptance.hpp"
#include "fbsmp/errors.hpp"
#include "fbsmp/hamiltonian.hpp"

namespace fbsmp {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// JSON has no inf/nan; spell them out so the files stay parseable.
json num(double x) {
    if (std::isfinite(x)) return x;
    if (std::isnan(x)) return "nan";
    return x > 0 ? "inf" : "-inf";
}

json est_json(const Estimate& e) { return {{"mean", num(e.mean)}, {"stderr", num(e.se)}}; }

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

fs::path prepare_out(const RunConfig& cfg) {
    fs::path out(cfg.out);
    fs::create_directories(out);
    json c = config_to_json(cfg);
    c["version"] = kVersion;
    write_json(out / "config.json", c);
    write_text(out / "VERSION", std::string(kVersion) + "\n");
    return out;
}

PicardOpts picard_opts(const RunConfig& cfg) {
    PicardOpts o;
    o.max_sweeps = cfg.solver.picard_max;
    o.tol = cfg.solver.picard_tol;
    o.damping = cfg.solver.damping;
    o.basis_degree = cfg.solver.basis_degree;
    return o;
}

AdjointOpts adjoint_opts(const RunConfig& cfg) {
    AdjointOpts o;
    o.basis_degree = cfg.solver.basis_degree;
    o.c_min = cfg.solver.c_min;
    return o;
}

BrownianBundle make_bundle(const RunConfig& cfg, const BenchmarkProblem& bp) {
    return sample_brownian(TimeGrid(bp.spec.T, cfg.solver.steps), cfg.solver.paths, SeedSpec{cfg.seed});
}

struct Pipeline {
    BenchmarkProblem bp;
    BrownianBundle bundle;
    FbsdeSolution sol;
    FirstOrderAdjoint adj1;
    SecondOrderAdjoint adj2;
};

Pipeline run_pipeline(const RunConfig& cfg, std::ostream& log) {
    Pipeline p{make_problem(cfg), {}, {}, {}, {}};
    p.bundle = make_bundle(cfg, p.bp);
    log << "solving " << cfg.problem << " (M=" << cfg.solver.paths << ", N=" << cfg.solver.steps << ")\n";
    p.sol = solve_coupled_picard(p.bp.spec, make_control(cfg, p.bp), p.bundle, picard_opts(cfg));
    log << "  J = " << fmt_double(p.sol.J.mean) << " (se " << fmt_double(p.sol.J.se) << "), " << p.sol.sweeps
        << " sweeps\n";
    p.adj1 = solve_first_order_adjoint(p.bp.spec, p.sol, p.bundle, adjoint_opts(cfg));
    p.adj2 = solve_second_order_adjoint(p.bp.spec, p.sol, p.adj1, p.bundle, adjoint_opts(cfg));
    return p;
}

}  // namespace

int cmd_solve(const RunConfig& cfg, std::ostream& log) {
    const fs::path out = prepare_out(cfg);
    Pipeline p = run_pipeline(cfg, log);
    json s;
    s["version"] = kVersion;
    s["problem"] = cfg.problem;
    s["J"] = est_json(p.sol.J);
    if (p.bp.J_star && cfg.control.is_string()) s["J_star"] = num(*p.bp.J_star);
    json tr = json::array();
    for (double r : p.sol.trace) tr.push_back(num(r));
    s["picard"] = {{"sweeps", p.sol.sweeps},
                   {"trace", tr},
                   {"damping_used", num(p.sol.damping_used)},
                   {"damping_adapted", p.sol.damping_adapted},
                   {"ridge", p.sol.ridge}};
    s["first_order_adjoint"] = {{"margin", num(p.adj1.margin)},
                                {"max_abs_q", num(p.adj1.max_abs_q)},
                                {"k1_identity", num(p.adj1.k1_identity)},
                                {"max_inner", p.adj1.max_inner}};
    s["second_order_adjoint"] = {{"max_asymmetry", num(p.adj2.max_asymmetry)}, {"max_inner", p.adj2.max_inner}};
    write_json(out / "summary.json", s);
    if (cfg.dump_panels) {
        write_panel_csv(p.sol.X, (out / "X.csv").string());
        write_panel_csv(p.sol.Y, (out / "Y.csv").string());
        write_panel_csv(p.sol.Z, (out / "Z.csv").string());
        write_panel_csv(p.sol.U, (out / "U.csv").string());
        write_panel_csv(p.adj1.p, (out / "p.csv").string());
        write_panel_csv(p.adj1.q, (out / "q.csv").string());
        write_panel_csv(p.adj2.P, (out / "P.csv").string());
    }
    log << "wrote " << (out / "summary.json").string() << "\n";
    return kExitOk;
}

int cmd_spike(const RunConfig& cfg, std::ostream& log) {
    const fs::path out = prepare_out(cfg);
    BenchmarkProblem bp = make_problem(cfg);
    BrownianBundle bundle = make_bundle(cfg, bp);
    OrderOpts o;
    o.ladder = cfg.experiment.epsilon_ladder.empty() ? default_ladder(bp.spec.T) : cfg.experiment.epsilon_ladder;
    o.betas = cfg.experiment.betas;
    o.t0 = cfg.experiment.spike_at;
    o.u = default_spike_value(cfg);
    o.picard = picard_opts(cfg);
    o.adjoint = adjoint_opts(cfg);
    o.delta.c_min = cfg.solver.c_min;
    o.check_relations = cfg.experiment.check_relations;
    log << "spike experiment on " << cfg.problem << " over " << o.ladder.size() << " widths\n";
    OrderReport rep = run_order_experiment(bp.spec, make_control(cfg, bp), bundle, o);

    write_order_csv(rep, (out / "order.csv").string());
    write_slopes_csv(rep, (out / "slopes.csv").string());
    json j;
    j["version"] = kVersion;
    j["problem"] = rep.problem;
    j["J_ref"] = num(rep.J_ref);
    json recs = json::array();
    for (const auto& r : rep.records) {
        json e = {{"epsilon", num(r.eps)}, {"ok", r.ok}};
        if (!r.ok) {
            e["error"] = r.error;
        } else {
            e["J_diff"] = {{"mean", num(r.J_diff)}, {"stderr", num(r.J_diff_se)}};
            e["Y2_0"] = num(r.Y2_0);
            e["defect"] = {{"mean", num(r.defect)}, {"stderr", num(r.defect_se)}};
            e["defect_plain"] = num(r.defect_plain);
            e["yhat_bsde"] = est_json(r.yhat_bsde);
            e["yhat_gamma"] = est_json(r.yhat_gamma);
            e["relation1"] = num(r.relation1);
            e["relation2"] = num(r.relation2);
            e["delta_residual"] = num(r.delta_residual);
            e["delta_method"] = r.delta_method;
            e["sweeps"] = r.sweeps;
            e["damping_adapted"] = r.damping_adapted;
        }
        recs.push_back(e);
    }
    j["epsilons"] = recs;
    json sl = json::array();
    for (const auto& s : rep.slopes)
        sl.push_back({{"norm", s.norm},
                      {"beta", num(s.beta)},
                      {"slope", num(s.slope)},
                      {"half_width", num(s.half_width)},
                      {"points", s.points},
                      {"dropped_largest", s.dropped_largest},
                      {"valid", s.valid}});
    j["slopes"] = sl;
    write_json(out / "report.json", j);
    for (const auto& s : rep.slopes)
        if (s.valid) log << "  slope " << s.norm << " beta=" << s.beta << ": " << fmt_double(s.slope) << "\n";
    return kExitOk;
}

int cmd_mp_check(const RunConfig& cfg, std::ostream& log) {
    const fs::path out = prepare_out(cfg);
    Pipeline p = run_pipeline(cfg, log);
    MpOpts o;
    o.node_samples = cfg.experiment.mp_nodes;
    o.path_samples = cfg.experiment.mp_paths;
    o.delta.c_min = cfg.solver.c_min;
    MpReport rep = check_maximum_principle(p.bp.spec, p.sol, p.adj1, p.adj2, o);
    json w = {{"node", rep.worst.node},
              {"path", rep.worst.path},
              {"t", num(rep.worst.t)},
              {"gap", num(rep.worst.gap)},
              {"stderr", num(rep.worst.se)},
              {"z", num(rep.worst.z)}};
    json wu = json::array();
    for (int k = 0; k < rep.worst.u.size(); ++k) wu.push_back(num(rep.worst.u[k]));
    w["u"] = wu;
    json j = {{"version", kVersion},
              {"problem", cfg.problem},
              {"verdict", rep.pass ? "PASS" : "FAIL"},
              {"min_z", num(rep.min_z)},
              {"min_gap", num(rep.min_gap)},
              {"pairs", rep.pairs},
              {"z_threshold", num(o.z_threshold)},
              {"worst", w}};
    write_json(out / "mp.json", j);
    if (cfg.dump_hamiltonian) write_mp_csv(rep, (out / "hamiltonian.csv").string());
    log << "maximum principle: " << (rep.pass ? "PASS" : "FAIL") << " (min z " << fmt_double(rep.min_z)
        << ", min gap " << fmt_double(rep.min_gap) << ", " << rep.pairs << " pairs)\n";
    return rep.pass ? kExitOk : kExitFail;
}

namespace {

int bench(const RunConfig& cfg, std::ostream& log, bool reproducibility) {
    const fs::path out = prepare_out(cfg);
    AcceptanceOpts o;
    o.paths = cfg.solver.paths;
    o.steps = cfg.solver.steps;
    o.seed = cfg.seed;
    o.work_dir = (out / "work").string();
    o.check_reproducibility = reproducibility;
    std::vector<CriterionResult> res = run_acceptance(o, &log);
    std::string txt;
    json arr = json::array();
    bool all = true;
    for (const auto& r : res) {
        txt += format_result(r) + "\n";
        arr.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
        all = all && r.pass;
    }
    write_text(out / "acceptance.txt", txt);
    write_json(out / "acceptance.json", {{"version", kVersion}, {"criteria", arr}, {"all_pass", all}});
    return all ? kExitOk : kExitFail;
}

}  // namespace

int cmd_bench(const RunConfig& cfg, std::ostream& log) { return bench(cfg, log, true); }
int cmd_bench_inner(const RunConfig& cfg, std::ostream& log) { return bench(cfg, log, false); }

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log) {
    try {
        if (name == "solve") return cmd_solve(cfg, log);
        if (name == "spike") return cmd_spike(cfg, log);
        if (name == "mp-check") return cmd_mp_check(cfg, log);
        if (name == "bench") return cmd_bench(cfg, log);
        log << "error: unknown command " << name << "\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        log << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NoConvergence& e) {
        log << "no convergence: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const InvertibilityError& e) {
        log << "invertibility: " << e.what() << "\n";
        return kExitInvertibility;
    } catch (const NonFinite& e) {
        log << "non-finite value: " << e.what() << "\n";
        return kExitNoConvergence;
    } catch (const std::invalid_argument& e) {
        log << "invalid input: " << e.what() << "\n";
        return kExitConfig;
    }
}

}  // namespace fbsmp
