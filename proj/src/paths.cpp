#include "fbsmp/paths.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "fbsmp/errors.hpp"

namespace fbsmp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double unit_open(std::mt19937_64& eng) {
    // (0, 1): 53 random bits shifted off zero
    return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

int dim_side(int dim) {
    int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
    if (n * n != dim) throw std::invalid_argument("panel dim is not a square");
    return n;
}

constexpr char kMagic[8] = {'F', 'B', 'S', 'M', 'P', 'P', 'N', '1'};

}  // namespace

TimeGrid::TimeGrid(double T_, int N_) : T(T_), N(N_) {
    if (!(T_ > 0.0)) throw std::invalid_argument("TimeGrid: T must be positive");
    if (N_ < 2) throw std::invalid_argument("TimeGrid: N must be at least 2");
}

double BrownianBundle::value(int m, int i) const {
    double b = 0.0;
    for (int j = 0; j < i; ++j) b += inc(m, j);
    return b;
}

BrownianBundle sample_brownian(const TimeGrid& grid, int M, SeedSpec seed) {
    if (M < 1) throw std::invalid_argument("sample_brownian: M must be at least 1");
    BrownianBundle out;
    out.grid = grid;
    out.M = M;
    out.seed = seed;
    out.dB.resize(static_cast<std::size_t>(M) * grid.N);
    const double sd = std::sqrt(grid.dt());
    const double two_pi = 2.0 * std::acos(-1.0);
    for (int m = 0; m < M; ++m) {
        std::mt19937_64 eng(splitmix64(seed.root ^ splitmix64(static_cast<std::uint64_t>(m) + 1)));
        double* row = &out.dB[static_cast<std::size_t>(m) * grid.N];
        for (int i = 0; i < grid.N; i += 2) {
            double r = std::sqrt(-2.0 * std::log(unit_open(eng)));
            double th = two_pi * unit_open(eng);
            row[i] = sd * r * std::cos(th);
            if (i + 1 < grid.N) row[i + 1] = sd * r * std::sin(th);
        }
    }
    return out;
}

BrownianBundle coarsen(const BrownianBundle& fine, int factor) {
    if (factor < 1 || fine.grid.N % factor != 0)
        throw std::invalid_argument("coarsen: factor must divide N");
    BrownianBundle out;
    out.grid = TimeGrid(fine.grid.T, fine.grid.N / factor);
    out.M = fine.M;
    out.seed = fine.seed;
    out.dB.assign(static_cast<std::size_t>(out.M) * out.grid.N, 0.0);
    for (int m = 0; m < fine.M; ++m)
        for (int i = 0; i < fine.grid.N; ++i)
            out.dB[static_cast<std::size_t>(m) * out.grid.N + i / factor] += fine.inc(m, i);
    return out;
}

Panel::Panel(const TimeGrid& grid, int M, int dim, std::string label)
    : grid_(grid), M_(M), dim_(dim), label_(std::move(label)),
      data_(static_cast<std::size_t>(M) * (grid.N + 1) * dim, 0.0) {
    if (M < 1 || dim < 1) throw std::invalid_argument("Panel: M and dim must be positive");
}

Panel Panel::from_values(const TimeGrid& grid, int M, int dim, std::vector<double> values,
                         std::string label) {
    Panel p(grid, M, dim, std::move(label));
    if (values.size() != p.data_.size()) throw std::invalid_argument("Panel: value count mismatch");
    p.data_ = std::move(values);
    p.require_finite();
    return p;
}

Vec Panel::vec(int m, int i) const {
    Vec v(dim_);
    const double* r = row(m, i);
    for (int k = 0; k < dim_; ++k) v[k] = r[k];
    return v;
}

void Panel::set(int m, int i, const Vec& v) {
    double* r = row(m, i);
    for (int k = 0; k < dim_; ++k) r[k] = v[k];
}

Mat Panel::mat(int m, int i) const {
    const int n = dim_side(dim_);
    Mat A(n, n);
    const double* r = row(m, i);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) A(a, b) = r[a * n + b];
    return A;
}

void Panel::set_mat(int m, int i, const Mat& A) {
    const int n = dim_side(dim_);
    double* r = row(m, i);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) r[a * n + b] = A(a, b);
}

void Panel::require_finite() const {
    for (std::size_t j = 0; j < data_.size(); ++j) {
        if (!std::isfinite(data_[j])) {
            const std::size_t per_path = static_cast<std::size_t>(grid_.N + 1) * dim_;
            int m = static_cast<int>(j / per_path);
            int i = static_cast<int>((j % per_path) / dim_);
            throw NonFinite("panel '" + label_ + "' has a non-finite value at path " +
                                std::to_string(m) + ", node " + std::to_string(i),
                            m, i);
        }
    }
}

MomentSpec::MomentSpec(double beta_, Kind kind_) : beta(beta_), kind(kind_) {
    if (!(beta_ >= 2.0 && beta_ <= 8.0)) throw std::invalid_argument("MomentSpec: beta must lie in [2, 8]");
}

Estimate moment_norm(const Panel& panel, const MomentSpec& spec) {
    const int M = panel.paths();
    const int N = panel.grid().N;
    const double dt = panel.grid().dt();
    double sum = 0.0, sum2 = 0.0;
    for (int m = 0; m < M; ++m) {
        double v = 0.0;
        if (spec.kind == MomentSpec::Kind::SUP) {
            double mx = 0.0;
            for (int i = 0; i <= N; ++i) {
                const double* r = panel.row(m, i);
                double s = 0.0;
                for (int k = 0; k < panel.dim(); ++k) s += r[k] * r[k];
                mx = std::max(mx, s);
            }
            v = std::pow(mx, 0.5 * spec.beta);
        } else {
            double acc = 0.0;
            for (int i = 0; i < N; ++i) {
                const double* r = panel.row(m, i);
                for (int k = 0; k < panel.dim(); ++k) acc += r[k] * r[k] * dt;
            }
            v = std::pow(acc, 0.5 * spec.beta);
        }
        sum += v;
        sum2 += v * v;
    }
    Estimate e;
    e.mean = sum / M;
    if (M > 1) {
        double var = std::max(0.0, (sum2 - M * e.mean * e.mean) / (M - 1));
        e.se = std::sqrt(var / M);
    }
    return e;
}

std::string fmt_double(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

void write_panel_csv(const Panel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << "path,node,t";
    for (int k = 0; k < panel.dim(); ++k) out << ",v" << k;
    out << "\n";
    for (int m = 0; m < panel.paths(); ++m) {
        for (int i = 0; i < panel.nodes(); ++i) {
            out << m << ',' << i << ',' << fmt_double(panel.grid().t(i));
            const double* r = panel.row(m, i);
            for (int k = 0; k < panel.dim(); ++k) out << ',' << fmt_double(r[k]);
            out << "\n";
        }
    }
}

void write_panel_binary(const Panel& panel, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    out.write(kMagic, sizeof(kMagic));
    std::int32_t hdr[4] = {panel.paths(), panel.grid().N, panel.dim(),
                           static_cast<std::int32_t>(panel.label().size())};
    out.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    double T = panel.grid().T;
    out.write(reinterpret_cast<const char*>(&T), sizeof(T));
    out.write(panel.label().data(), static_cast<std::streamsize>(panel.label().size()));
    out.write(reinterpret_cast<const char*>(panel.values().data()),
              static_cast<std::streamsize>(panel.values().size() * sizeof(double)));
}

Panel read_panel_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(path + ": not a panel dump");
    std::int32_t hdr[4];
    in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
    double T = 0.0;
    in.read(reinterpret_cast<char*>(&T), sizeof(T));
    std::string label(static_cast<std::size_t>(hdr[3]), '\0');
    in.read(label.data(), hdr[3]);
    TimeGrid grid(T, hdr[1]);
    std::vector<double> values(static_cast<std::size_t>(hdr[0]) * (hdr[1] + 1) * hdr[2]);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) throw std::runtime_error(path + ": truncated panel dump");
    return Panel::from_values(grid, hdr[0], hdr[2], std::move(values), label);
}

}  // namespace fbsmp
