#pragma once

#include <optional>

#include "fbsmp/model.hpp"
#include "fbsmp/paths.hpp"

namespace fbsmp {

// Spike window E = [t0, t0 + eps) on grid nodes i0 .. i0 + width - 1, with the control replaced
// by `u_value` (or by `u_table` when given) inside it.
struct SpikeSpec {
    int i0 = 0;
    int width = 0;
    Vec u_value;
    std::optional<Panel> u_table;

    bool in_window(int i) const { return i >= i0 && i < i0 + width; }
    double epsilon(const TimeGrid& g) const { return width * g.dt(); }
    Vec u_at(int m, int i) const { return u_table ? u_table->vec(m, i) : u_value; }
};

// Throws std::invalid_argument unless t0 and eps are multiples of dt and the window fits in [0, T].
SpikeSpec make_spike(const TimeGrid& grid, double t0, double eps, Vec u);

// The spiked open-loop control: ubar off the window, the spike value on it.
Panel spiked_table(const Panel& ubar, const SpikeSpec& spike);

struct DeltaProcess {
    enum class Method { CLOSED_FORM_SZ0, CLOSED_FORM_LINEAR, FIXED_POINT };
    Panel delta;     // zero off the window
    Panel residual;  // |Delta - <p, sigma(zbar + Delta, u) - sigma(zbar, ubar)>|
    Method method = Method::FIXED_POINT;
    int max_iterations = 0;
    bool newton_used = false;
    double max_residual = 0.0;
    double growth_constant = 0.0;  // max |Delta| / (1 + |X| + |Y| + |u| + |ubar|)
};

const char* method_name(DeltaProcess::Method m);

}  // namespace fbsmp
