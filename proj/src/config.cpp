#include "fbsmp/config.hpp"

#include <cmath>
#include <fstream>

#include "fbsmp/errors.hpp"

namespace fbsmp {

using nlohmann::json;

namespace {

template <class T>
void read(const json& obj, const char* key, const std::string& path, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config field '" + path + key + "' has the wrong type");
    }
}

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError("config field '" + field + "' " + what);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || it.key() == a;
        require(ok, path + it.key(), "is not a known field");
    }
}

}  // namespace

RunConfig config_from_json(const json& j) {
    require(j.is_object(), "<root>", "must be a JSON object");
    check_keys(j, "", {"problem", "params", "control", "solver", "experiment", "seed", "out", "dump_panels",
                       "dump_hamiltonian", "version"});
    RunConfig c;
    read(j, "problem", "", c.problem);
    if (j.contains("params")) {
        require(j.at("params").is_object(), "params", "must be an object");
        c.params = j.at("params");
    }
    if (j.contains("control")) c.control = j.at("control");
    read(j, "seed", "", c.seed);
    read(j, "out", "", c.out);
    read(j, "dump_panels", "", c.dump_panels);
    read(j, "dump_hamiltonian", "", c.dump_hamiltonian);
    if (j.contains("solver")) {
        const json& s = j.at("solver");
        require(s.is_object(), "solver", "must be an object");
        check_keys(s, "solver.", {"steps", "paths", "basis_degree", "picard_tol", "picard_max", "damping", "c_min"});
        read(s, "steps", "solver.", c.solver.steps);
        read(s, "paths", "solver.", c.solver.paths);
        read(s, "basis_degree", "solver.", c.solver.basis_degree);
        read(s, "picard_tol", "solver.", c.solver.picard_tol);
        read(s, "picard_max", "solver.", c.solver.picard_max);
        read(s, "damping", "solver.", c.solver.damping);
        read(s, "c_min", "solver.", c.solver.c_min);
    }
    if (j.contains("experiment")) {
        const json& e = j.at("experiment");
        require(e.is_object(), "experiment", "must be an object");
        check_keys(e, "experiment.", {"epsilon_ladder", "betas", "spike_at", "spike_value", "u_grid", "mp_nodes",
                                      "mp_paths", "check_relations"});
        read(e, "epsilon_ladder", "experiment.", c.experiment.epsilon_ladder);
        read(e, "betas", "experiment.", c.experiment.betas);
        read(e, "spike_at", "experiment.", c.experiment.spike_at);
        read(e, "spike_value", "experiment.", c.experiment.spike_value);
        read(e, "u_grid", "experiment.", c.experiment.u_grid);
        read(e, "mp_nodes", "experiment.", c.experiment.mp_nodes);
        read(e, "mp_paths", "experiment.", c.experiment.mp_paths);
        read(e, "check_relations", "experiment.", c.experiment.check_relations);
    }
    validate(c);
    return c;
}

json config_to_json(const RunConfig& c) {
    json j;
    j["problem"] = c.problem;
    j["params"] = c.params;
    j["control"] = c.control;
    j["solver"] = {{"steps", c.solver.steps},           {"paths", c.solver.paths},
                   {"basis_degree", c.solver.basis_degree}, {"picard_tol", c.solver.picard_tol},
                   {"picard_max", c.solver.picard_max}, {"damping", c.solver.damping},
                   {"c_min", c.solver.c_min}};
    j["experiment"] = {{"epsilon_ladder", c.experiment.epsilon_ladder},
                       {"betas", c.experiment.betas},
                       {"spike_at", c.experiment.spike_at},
                       {"spike_value", c.experiment.spike_value},
                       {"u_grid", c.experiment.u_grid},
                       {"mp_nodes", c.experiment.mp_nodes},
                       {"mp_paths", c.experiment.mp_paths},
                       {"check_relations", c.experiment.check_relations}};
    j["seed"] = c.seed;
    j["out"] = c.out;
    j["dump_panels"] = c.dump_panels;
    j["dump_hamiltonian"] = c.dump_hamiltonian;
    return j;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void validate(const RunConfig& c) {
    require(c.problem == "lq" || c.problem == "coupled_z", "problem", "must be \"lq\" or \"coupled_z\"");
    require(c.solver.steps >= 2, "solver.steps", "must be at least 2");
    require(c.solver.paths >= 2, "solver.paths", "must be at least 2");
    require(c.solver.basis_degree >= 0 && c.solver.basis_degree <= 4, "solver.basis_degree", "must lie in [0, 4]");
    require(c.solver.picard_tol > 0.0, "solver.picard_tol", "must be positive");
    require(c.solver.picard_max >= 1, "solver.picard_max", "must be at least 1");
    require(c.solver.damping > 0.0 && c.solver.damping <= 1.0, "solver.damping", "must lie in (0, 1]");
    require(c.solver.c_min >= 0.0, "solver.c_min", "must be non-negative");
    for (double e : c.experiment.epsilon_ladder) require(e > 0.0, "experiment.epsilon_ladder", "entries must be positive");
    require(!c.experiment.betas.empty(), "experiment.betas", "must not be empty");
    for (double b : c.experiment.betas) require(b > 0.0, "experiment.betas", "entries must be positive");
    require(c.experiment.u_grid == 0 || c.experiment.u_grid >= 2, "experiment.u_grid", "must be 0 or at least 2");
    require(c.experiment.mp_nodes >= 1, "experiment.mp_nodes", "must be at least 1");
    require(c.experiment.mp_paths >= 1, "experiment.mp_paths", "must be at least 1");
    require(c.experiment.spike_value.empty() || c.experiment.spike_value.size() == 1, "experiment.spike_value",
            "must have one entry");
    require(c.control.is_number() || (c.control.is_string() && c.control.get<std::string>() == "optimal"),
            "control", "must be \"optimal\" or a number");
    for (auto it = c.params.begin(); it != c.params.end(); ++it)
        require(it.value().is_number(), "params." + it.key(), "must be a number");
    if (c.problem == "lq")
        check_keys(c.params, "params.", {"sigma0", "x0", "T", "u_lo", "u_hi"});
    else
        check_keys(c.params, "params.", {"alpha", "x0", "T"});
    if (c.params.contains("T")) require(c.params.at("T").get<double>() > 0.0, "params.T", "must be positive");
}

BenchmarkProblem make_problem(const RunConfig& c) {
    auto num = [&](const char* k, double def) { return c.params.contains(k) ? c.params.at(k).get<double>() : def; };
    if (c.problem == "lq") {
        LqParams p;
        p.sigma0 = num("sigma0", p.sigma0);
        p.x0 = num("x0", p.x0);
        p.T = num("T", p.T);
        p.u_lo = num("u_lo", p.u_lo);
        p.u_hi = num("u_hi", p.u_hi);
        if (c.experiment.u_grid > 0) p.u_grid = c.experiment.u_grid;
        if (!(p.u_lo < p.u_hi)) throw ConfigError("config field 'params.u_lo' must be below params.u_hi");
        return benchmark_lq(p);
    }
    CoupledZParams p;
    p.alpha = num("alpha", p.alpha);
    p.x0 = num("x0", p.x0);
    p.T = num("T", p.T);
    p.c_min = c.solver.c_min;
    return benchmark_coupled_z(p);
}

ControlLaw make_control(const RunConfig& c, const BenchmarkProblem& bp) {
    if (c.control.is_number()) return ControlLaw::constant(Vec::Constant(bp.spec.k, c.control.get<double>()));
    return bp.optimal;
}

Vec default_spike_value(const RunConfig& c) {
    if (!c.experiment.spike_value.empty()) return Vec::Constant(1, c.experiment.spike_value[0]);
    // LQ: a suboptimal constant; coupled_z: the middle point of U.
    return Vec::Constant(1, c.problem == "lq" ? 1.0 : 0.0);
}

}  // namespace fbsmp
