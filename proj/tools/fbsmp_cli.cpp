// fbsmp_cli: solve | spike | mp-check | bench
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fbsmp/commands.hpp"
#include "fbsmp/errors.hpp"

using nlohmann::json;

namespace {

std::vector<double> parse_csv(const std::string& s, const std::string& field) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw fbsmp::ConfigError("config field '" + field + "' has a malformed entry '" + tok + "'");
        }
    }
    return out;
}

json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw fbsmp::ConfigError("cannot open config file " + path);
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw fbsmp::ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coupled FBSDE control: solver, spike experiments and maximum-principle checks"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", fbsmp::kVersion);

    std::string config_path, out, problem, eps_csv, beta_csv, control;
    std::optional<std::uint64_t> seed;
    std::optional<int> paths, steps;
    std::optional<double> spike_at, c_min;
    bool dump_panels = false, dump_ham = false;

    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "root seed of the Brownian bundle");
    app.add_option("--out", out, "output directory");
    app.add_option("--paths", paths, "Monte Carlo paths M");
    app.add_option("--steps", steps, "time steps N");
    app.add_option("--problem", problem, "lq or coupled_z");
    app.add_option("--control", control, "\"optimal\" or a constant control value");
    app.add_option("--epsilon-ladder", eps_csv, "comma separated spike widths");
    app.add_option("--beta", beta_csv, "comma separated moment exponents");
    app.add_option("--spike-at", spike_at, "spike start t0 (default T/4)");
    app.add_option("--c-min", c_min, "invertibility guard");
    app.add_flag("--dump-panels", dump_panels, "write solution panels as CSV");
    app.add_flag("--dump-hamiltonian", dump_ham, "write every sampled Hamiltonian gap as CSV");

    app.add_subcommand("solve", "solve the coupled FBSDE and both adjoints");
    app.add_subcommand("spike", "spike-variation order experiment over an epsilon ladder");
    app.add_subcommand("mp-check", "check the maximum-principle inequality along a candidate control");
    app.add_subcommand("bench", "run the acceptance suite");

    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    fbsmp::RunConfig cfg;
    try {
        json j = config_path.empty() ? fbsmp::config_to_json(fbsmp::RunConfig{}) : read_json_file(config_path);
        if (!j.is_object()) throw fbsmp::ConfigError("config field '<root>' must be a JSON object");
        if (seed) j["seed"] = *seed;
        if (!out.empty()) j["out"] = out;
        if (paths) j["solver"]["paths"] = *paths;
        if (steps) j["solver"]["steps"] = *steps;
        if (c_min) j["solver"]["c_min"] = *c_min;
        if (!problem.empty()) {
            if (j.value("problem", std::string("lq")) != problem) j["params"] = json::object();
            j["problem"] = problem;
        }
        if (!control.empty()) {
            if (control == "optimal") j["control"] = control;
            else j["control"] = parse_csv(control, "control").at(0);
        }
        if (!eps_csv.empty()) j["experiment"]["epsilon_ladder"] = parse_csv(eps_csv, "experiment.epsilon_ladder");
        if (!beta_csv.empty()) j["experiment"]["betas"] = parse_csv(beta_csv, "experiment.betas");
        if (spike_at) j["experiment"]["spike_at"] = *spike_at;
        if (dump_panels) j["dump_panels"] = true;
        if (dump_ham) j["dump_hamiltonian"] = true;
        cfg = fbsmp::config_from_json(j);
    } catch (const fbsmp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return fbsmp::kExitConfig;
    }
    return fbsmp::run_command(cmd, cfg, std::cerr);
}
