#include <iostream>

#include "CLI11.hpp"

#include "fbsmp/acceptance.hpp"

int main(int argc, char** argv) {
    fbsmp::AcceptanceOpts o;
    CLI::App app{"acceptance criteria 1-9"};
    app.add_option("--paths", o.paths, "Monte Carlo paths");
    app.add_option("--steps", o.steps, "time steps");
    app.add_option("--seed", o.seed, "root seed");
    app.add_option("--work-dir", o.work_dir, "scratch directory for the rerun check");
    CLI11_PARSE(app, argc, argv);

    const auto results = fbsmp::run_acceptance(o, &std::cout);
    int failed = 0;
    for (const auto& r : results) failed += r.pass ? 0 : 1;
    std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
