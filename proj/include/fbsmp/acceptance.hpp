#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace fbsmp {

struct AcceptanceOpts {
    int paths = 10000;
    int steps = 256;
    std::uint64_t seed = 20231;
    std::string work_dir = "acceptance_work";  // scratch space for the reproducibility check
    bool check_reproducibility = true;
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

// Runs criteria 1-9 in order; `progress` (may be null) receives one line per finished criterion.
std::vector<CriterionResult> run_acceptance(const AcceptanceOpts& opts, std::ostream* progress);

std::string format_result(const CriterionResult& r);

}  // namespace fbsmp
