#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbsmp/model.hpp"

namespace fbsmp {

inline constexpr const char* kVersion = "fbsmp 0.1.0";

struct SolverBlock {
    int steps = 256;
    int paths = 10000;
    int basis_degree = 2;
    double picard_tol = 1e-6;
    int picard_max = 50;
    double damping = 1.0;
    double c_min = 0.1;
};

struct ExperimentBlock {
    std::vector<double> epsilon_ladder;  // empty: T * {2^-4, ..., 2^-8}
    std::vector<double> betas{2.0};
    double spike_at = -1.0;              // negative: T/4
    std::vector<double> spike_value;     // empty: problem default
    int u_grid = 0;                      // points per axis for a box U; 0 keeps the problem's grid
    int mp_nodes = 32;
    int mp_paths = 64;
    bool check_relations = false;
};

struct RunConfig {
    std::string problem = "lq";  // "lq" or "coupled_z"
    // Problem parameter overrides: lq {sigma0, x0, T, u_lo, u_hi}; coupled_z {alpha, x0, T}.
    nlohmann::json params = nlohmann::json::object();
    // "optimal" or a number for a constant control.
    nlohmann::json control = "optimal";
    SolverBlock solver;
    ExperimentBlock experiment;
    std::uint64_t seed = 1;
    std::string out = "out";
    bool dump_panels = false;
    bool dump_hamiltonian = false;
};

// Throws ConfigError naming the offending field.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);
void validate(const RunConfig& c);

BenchmarkProblem make_problem(const RunConfig& c);
ControlLaw make_control(const RunConfig& c, const BenchmarkProblem& bp);
Vec default_spike_value(const RunConfig& c);

}  // namespace fbsmp
