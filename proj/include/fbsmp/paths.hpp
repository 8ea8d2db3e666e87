#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbsmp/linalg.hpp"

namespace fbsmp {

struct TimeGrid {
    TimeGrid() = default;
    TimeGrid(double T, int N);

    double T = 1.0;
    int N = 2;

    double dt() const { return T / N; }
    double t(int i) const { return T * i / N; }
};

// Stream id of path m is m itself, so path m's increments never depend on M.
struct SeedSpec {
    std::uint64_t root = 0;
};

struct BrownianBundle {
    TimeGrid grid;
    int M = 0;
    SeedSpec seed;
    std::vector<double> dB;  // M x N, row-major by path

    double inc(int m, int i) const { return dB[static_cast<std::size_t>(m) * grid.N + i]; }
    // B at node i along path m (B_0 = 0).
    double value(int m, int i) const;
};

BrownianBundle sample_brownian(const TimeGrid& grid, int M, SeedSpec seed);

// Sums blocks of `factor` consecutive increments: same paths on a coarser grid.
BrownianBundle coarsen(const BrownianBundle& fine, int factor);

// M x (N+1) x dim values of an adapted process.
class Panel {
public:
    Panel() = default;
    Panel(const TimeGrid& grid, int M, int dim, std::string label = "");
    // Takes ownership of raw values and rejects non-finite entries.
    static Panel from_values(const TimeGrid& grid, int M, int dim, std::vector<double> values,
                             std::string label = "");

    int paths() const { return M_; }
    int nodes() const { return grid_.N + 1; }
    int dim() const { return dim_; }
    const TimeGrid& grid() const { return grid_; }
    const std::string& label() const { return label_; }
    void set_label(std::string s) { label_ = std::move(s); }

    double& at(int m, int i, int k = 0) { return data_[index(m, i, k)]; }
    double at(int m, int i, int k = 0) const { return data_[index(m, i, k)]; }
    double* row(int m, int i) { return &data_[index(m, i, 0)]; }
    const double* row(int m, int i) const { return &data_[index(m, i, 0)]; }

    Vec vec(int m, int i) const;
    void set(int m, int i, const Vec& v);
    // Row-major dim x dim matrix stored at (m, i).
    Mat mat(int m, int i) const;
    void set_mat(int m, int i, const Mat& A);

    // Throws NonFinite naming the first offending (path, node).
    void require_finite() const;

    const std::vector<double>& values() const { return data_; }
    std::vector<double>& values() { return data_; }

private:
    std::size_t index(int m, int i, int k) const {
        return (static_cast<std::size_t>(m) * (grid_.N + 1) + i) * dim_ + k;
    }

    TimeGrid grid_;
    int M_ = 0;
    int dim_ = 0;
    std::string label_;
    std::vector<double> data_;
};

struct MomentSpec {
    enum class Kind { SUP, INT2 };
    MomentSpec(double beta, Kind kind);
    double beta;
    Kind kind;
};

struct Estimate {
    double mean = 0.0;
    double se = 0.0;  // Monte Carlo standard error
};

// SUP: E[(max_i |v_i|)^beta]; INT2: E[(sum_{i<N} |v_i|^2 dt)^{beta/2}].
Estimate moment_norm(const Panel& panel, const MomentSpec& spec);

void write_panel_csv(const Panel& panel, const std::string& path);
void write_panel_binary(const Panel& panel, const std::string& path);
Panel read_panel_binary(const std::string& path);

// Shortest round-trip decimal form, identical across runs.
std::string fmt_double(double x);

}  // namespace fbsmp
