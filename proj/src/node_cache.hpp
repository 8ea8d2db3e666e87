#pragma once

#include <vector>

#include "fbsmp/fbsde.hpp"
#include "fbsmp/model.hpp"

namespace fbsmp {

// Coefficient jets along a reference solution, one node at a time. Backward sweeps visit
// nodes in order, so each node block is evaluated once.
class JetCache {
public:
    JetCache(const ProblemSpec& spec, const FbsdeSolution& sol) : spec_(spec), sol_(sol) {}

    const Jet& at(int m, int i) {
        if (i != node_) fill(i);
        return jets_[m];
    }

private:
    void fill(int i) {
        const int M = sol_.X.paths();
        jets_.resize(M);
        const double t = sol_.X.grid().t(i);
        for (int m = 0; m < M; ++m)
            jets_[m] = eval_jet(spec_, t, sol_.X.vec(m, i), sol_.Y.at(m, i), sol_.Z.at(m, i), sol_.U.vec(m, i));
        node_ = i;
    }

    const ProblemSpec& spec_;
    const FbsdeSolution& sol_;
    std::vector<Jet> jets_;
    int node_ = -1;
};

}  // namespace fbsmp
