#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fbsmp {

// A coefficient evaluator returned NaN/Inf at a probe point.
struct EvaluatorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A simulated or solved panel contains a non-finite entry.
struct NonFinite : std::runtime_error {
    NonFinite(const std::string& what, int path, int node)
        : std::runtime_error(what), path(path), node(node) {}
    int path;
    int node;
};

struct NoConvergence : std::runtime_error {
    NoConvergence(const std::string& what, std::vector<double> trace = {})
        : std::runtime_error(what), trace(std::move(trace)) {}
    std::vector<double> trace;
};

// |1 - <p, sigma_z>| fell below the configured guard c_min.
struct InvertibilityError : std::runtime_error {
    InvertibilityError(const std::string& what, double margin)
        : std::runtime_error(what), margin(margin) {}
    double margin;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace fbsmp
