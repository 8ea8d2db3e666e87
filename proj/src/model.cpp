#include "fbsmp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fbsmp/errors.hpp"

namespace fbsmp {

namespace {

Vec scalar_vec(double v) {
    Vec r(1);
    r[0] = v;
    return r;
}

Mat scalar_mat(double v) {
    Mat r(1, 1);
    r(0, 0) = v;
    return r;
}

// Columns: d/dx_1..d/dx_n, d/dy, d/dz.
Mat vector_gradient(const MatEval& dx, const VecEval& dy, const VecEval& dz, double t, const Vec& x,
                    double y, double z, const Vec& u) {
    const int n = static_cast<int>(x.size());
    Mat G(n, n + 2);
    G.leftCols(n) = dx(t, x, y, z, u);
    G.col(n) = dy(t, x, y, z, u);
    G.col(n + 1) = dz(t, x, y, z, u);
    return G;
}

Vec scalar_gradient(const ProblemSpec& s, double t, const Vec& x, double y, double z, const Vec& u) {
    const int n = static_cast<int>(x.size());
    Vec G(n + 2);
    G.head(n) = s.g_x(t, x, y, z, u);
    G[n] = s.g_y(t, x, y, z, u);
    G[n + 1] = s.g_z(t, x, y, z, u);
    return G;
}

struct WPoint {
    Vec x;
    double y, z;
};

WPoint shift(const Vec& x, double y, double z, int j, double h) {
    WPoint p{x, y, z};
    const int n = static_cast<int>(x.size());
    if (j < n) p.x[j] += h;
    else if (j == n) p.y += h;
    else p.z += h;
    return p;
}

double w_coord(const Vec& x, double y, double z, int j) {
    const int n = static_cast<int>(x.size());
    return j < n ? x[j] : (j == n ? y : z);
}

double mismatch(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max(1.0, std::abs(fd));
}

std::string describe_point(double t, const Vec& x, double y, double z, const Vec& u) {
    std::ostringstream os;
    os << "t=" << t << " x=(";
    for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << ") y=" << y << " z=" << z << " u=(";
    for (int i = 0; i < u.size(); ++i) os << (i ? "," : "") << u[i];
    os << ")";
    return os.str();
}

}  // namespace

ControlSet ControlSet::finite(std::vector<Vec> pts) {
    if (pts.empty()) throw std::invalid_argument("ControlSet: empty finite set");
    ControlSet c;
    c.kind = Kind::FINITE;
    c.points = std::move(pts);
    return c;
}

ControlSet ControlSet::box(Vec lo_, Vec hi_, int grid) {
    if (lo_.size() != hi_.size() || grid < 1) throw std::invalid_argument("ControlSet: bad box");
    ControlSet c;
    c.kind = Kind::BOX;
    c.lo = std::move(lo_);
    c.hi = std::move(hi_);
    c.grid_per_dim = grid;
    return c;
}

int ControlSet::dim() const {
    return kind == Kind::FINITE ? static_cast<int>(points.front().size()) : static_cast<int>(lo.size());
}

std::vector<Vec> ControlSet::sample() const {
    if (kind == Kind::FINITE) return points;
    const int k = dim();
    std::vector<Vec> out;
    std::vector<int> idx(k, 0);
    while (true) {
        Vec u(k);
        for (int a = 0; a < k; ++a) {
            double s = grid_per_dim == 1 ? 0.5 : static_cast<double>(idx[a]) / (grid_per_dim - 1);
            u[a] = lo[a] + s * (hi[a] - lo[a]);
        }
        out.push_back(u);
        int a = 0;
        while (a < k && ++idx[a] == grid_per_dim) idx[a++] = 0;
        if (a == k) break;
    }
    return out;
}

bool ControlSet::contains(const Vec& u, double tol) const {
    if (u.size() != dim()) return false;
    if (kind == Kind::FINITE) {
        for (const auto& p : points)
            if ((p - u).cwiseAbs().maxCoeff() <= tol) return true;
        return false;
    }
    for (int a = 0; a < dim(); ++a)
        if (u[a] < lo[a] - tol || u[a] > hi[a] + tol) return false;
    return true;
}

Jet eval_jet(const ProblemSpec& s, double t, const Vec& x, double y, double z, const Vec& u) {
    Jet j;
    j.b = s.b(t, x, y, z, u);
    j.s = s.sigma(t, x, y, z, u);
    j.g = s.g(t, x, y, z, u);
    j.bx = s.b_x(t, x, y, z, u);
    j.sx = s.sigma_x(t, x, y, z, u);
    j.by = s.b_y(t, x, y, z, u);
    j.bz = s.b_z(t, x, y, z, u);
    j.sy = s.sigma_y(t, x, y, z, u);
    j.sz = s.sigma_z(t, x, y, z, u);
    j.gx = s.g_x(t, x, y, z, u);
    j.gy = s.g_y(t, x, y, z, u);
    j.gz = s.g_z(t, x, y, z, u);
    return j;
}

void use_fd_second_partials(ProblemSpec& spec) {
    const ProblemSpec base = spec;
    auto vec_hess = [](MatEval dx, VecEval dy, VecEval dz) {
        return [dx, dy, dz](double t, const Vec& x, double y, double z, const Vec& u) {
            const int n = static_cast<int>(x.size());
            std::vector<Mat> H(n, Mat::Zero(n + 2, n + 2));
            for (int j = 0; j < n + 2; ++j) {
                double h = 1e-4 * std::max(1.0, std::abs(w_coord(x, y, z, j)));
                WPoint pp = shift(x, y, z, j, h), pm = shift(x, y, z, j, -h);
                Mat gp = vector_gradient(dx, dy, dz, t, pp.x, pp.y, pp.z, u);
                Mat gm = vector_gradient(dx, dy, dz, t, pm.x, pm.y, pm.z, u);
                for (int c = 0; c < n; ++c) H[c].col(j) = (gp.row(c) - gm.row(c)).transpose() / (2 * h);
            }
            for (auto& Hc : H) Hc = (0.5 * (Hc + Hc.transpose())).eval();
            return H;
        };
    };
    spec.b_hess = vec_hess(base.b_x, base.b_y, base.b_z);
    spec.sigma_hess = vec_hess(base.sigma_x, base.sigma_y, base.sigma_z);
    spec.g_hess = [base](double t, const Vec& x, double y, double z, const Vec& u) {
        const int n = static_cast<int>(x.size());
        Mat H(n + 2, n + 2);
        for (int j = 0; j < n + 2; ++j) {
            double h = 1e-4 * std::max(1.0, std::abs(w_coord(x, y, z, j)));
            WPoint pp = shift(x, y, z, j, h), pm = shift(x, y, z, j, -h);
            H.col(j) = (scalar_gradient(base, t, pp.x, pp.y, pp.z, u) -
                        scalar_gradient(base, t, pm.x, pm.y, pm.z, u)) / (2 * h);
        }
        return Mat(0.5 * (H + H.transpose()));
    };
    spec.phi_xx = [base](const Vec& x) {
        const int n = static_cast<int>(x.size());
        Mat H(n, n);
        for (int j = 0; j < n; ++j) {
            double h = 1e-4 * std::max(1.0, std::abs(x[j]));
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            H.col(j) = (base.phi_x(xp) - base.phi_x(xm)) / (2 * h);
        }
        return Mat(0.5 * (H + H.transpose()));
    };
}

ControlLaw ControlLaw::open_loop(Panel table) {
    ControlLaw c;
    c.kind = Kind::OPEN_LOOP;
    c.table = std::make_shared<const Panel>(std::move(table));
    return c;
}

ControlLaw ControlLaw::feedback(std::function<Vec(double, const Vec&)> law) {
    ControlLaw c;
    c.kind = Kind::FEEDBACK;
    c.law = std::move(law);
    return c;
}

ControlLaw ControlLaw::constant(Vec u) {
    return feedback([u](double, const Vec&) { return u; });
}

Vec ControlLaw::value(int path, int node, double t, const Vec& x) const {
    if (kind == Kind::OPEN_LOOP) return table->vec(path, node);
    return law(t, x);
}

Panel tabulate(const ControlLaw& law, const Panel& X) {
    Vec probe = law.value(0, 0, 0.0, X.vec(0, 0));
    Panel out(X.grid(), X.paths(), static_cast<int>(probe.size()), "u");
    for (int m = 0; m < X.paths(); ++m)
        for (int i = 0; i < X.nodes(); ++i) out.set(m, i, law.value(m, i, X.grid().t(i), X.vec(m, i)));
    return out;
}

double riccati_lq(double T, double t, int steps) {
    // integrate backward from T to t: dP/ds = P^2 - 1
    auto f = [](double P) { return P * P - 1.0; };
    double P = 1.0;
    const double h = -(T - t) / steps;
    for (int s = 0; s < steps; ++s) {
        double k1 = f(P), k2 = f(P + 0.5 * h * k1), k3 = f(P + 0.5 * h * k2), k4 = f(P + h * k3);
        P += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return P;
}

double lq_value(double T, double x0, double sigma0, int steps) {
    // state (P, r) with P' = P^2 - 1, r' = -sigma0^2 P / 2, P(T)=1, r(T)=0
    double P = 1.0, r = 0.0;
    const double h = -T / steps;
    auto fP = [](double p) { return p * p - 1.0; };
    auto fr = [sigma0](double p) { return -0.5 * sigma0 * sigma0 * p; };
    for (int s = 0; s < steps; ++s) {
        double k1 = fP(P), l1 = fr(P);
        double k2 = fP(P + 0.5 * h * k1), l2 = fr(P + 0.5 * h * k1);
        double k3 = fP(P + 0.5 * h * k2), l3 = fr(P + 0.5 * h * k2);
        double k4 = fP(P + h * k3), l4 = fr(P + h * k3);
        P += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        r += h / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4);
    }
    return 0.5 * P * x0 * x0 + r;
}

BenchmarkProblem benchmark_lq(const LqParams& prm) {
    ProblemSpec s;
    s.name = "lq";
    s.n = 1;
    s.k = 1;
    s.T = prm.T;
    s.x0 = scalar_vec(prm.x0);
    const double s0 = prm.sigma0;
    s.b = [](double, const Vec&, double, double, const Vec& u) { return scalar_vec(u[0]); };
    s.sigma = [s0](double, const Vec&, double, double, const Vec&) { return scalar_vec(s0); };
    s.g = [](double, const Vec& x, double, double, const Vec& u) { return 0.5 * (x[0] * x[0] + u[0] * u[0]); };
    s.phi = [](const Vec& x) { return 0.5 * x[0] * x[0]; };
    auto zero_v = [](double, const Vec&, double, double, const Vec&) { return scalar_vec(0.0); };
    auto zero_m = [](double, const Vec&, double, double, const Vec&) { return scalar_mat(0.0); };
    auto zero_s = [](double, const Vec&, double, double, const Vec&) { return 0.0; };
    s.b_x = zero_m;
    s.sigma_x = zero_m;
    s.b_y = s.b_z = s.sigma_y = s.sigma_z = zero_v;
    s.g_x = [](double, const Vec& x, double, double, const Vec&) { return scalar_vec(x[0]); };
    s.g_y = s.g_z = zero_s;
    s.phi_x = [](const Vec& x) { return scalar_vec(x[0]); };
    auto zero_h = [](double, const Vec&, double, double, const Vec&) {
        return std::vector<Mat>{Mat::Zero(3, 3)};
    };
    s.b_hess = s.sigma_hess = zero_h;
    s.g_hess = [](double, const Vec&, double, double, const Vec&) {
        Mat H = Mat::Zero(3, 3);
        H(0, 0) = 1.0;
        return H;
    };
    s.phi_xx = [](const Vec&) { return scalar_mat(1.0); };
    s.growth_L = 5.0 + std::abs(s0);
    s.control_set = ControlSet::box(scalar_vec(prm.u_lo), scalar_vec(prm.u_hi), prm.u_grid);
    s.sigma_form = SigmaForm::LINEAR_IN_Z;
    s.linear = LinearInZ{[](double) { return scalar_vec(0.0); },
                         [s0](double, const Vec&, double, const Vec&) { return scalar_vec(s0); }};
    s.forward_depends_on_yz = false;
    s.driver_depends_on_yz = false;
    s.sigma_free_of_z = true;

    BenchmarkProblem bp;
    bp.spec = s;
    // tabulated Riccati solution, linearly interpolated
    const int K = 2048;
    auto table = std::make_shared<std::vector<double>>(K + 1);
    for (int i = 0; i <= K; ++i) (*table)[i] = riccati_lq(prm.T, prm.T * i / K, 400);
    const double T = prm.T;
    auto P_at = [table, T, K](double t) {
        double s = std::clamp(t / T, 0.0, 1.0) * K;
        int i = std::min(static_cast<int>(s), K - 1);
        double w = s - i;
        return (1.0 - w) * (*table)[i] + w * (*table)[i + 1];
    };
    bp.optimal = ControlLaw::feedback([P_at](double t, const Vec& x) { return scalar_vec(-P_at(t) * x[0]); });
    bp.J_star = lq_value(prm.T, prm.x0, s0);
    bp.adjoint_p = [P_at](double t, const Vec& x) { return scalar_vec(P_at(t) * x[0]); };
    return bp;
}

BenchmarkProblem benchmark_coupled_z(const CoupledZParams& prm) {
    const double a = prm.alpha;
    // Along any control the first-order adjoint is deterministic here: q = 0 and
    // p' = -(1 - p^2), p(T) = 1. Integrate it and apply the invertibility guard.
    {
        double p = 1.0;
        const int steps = 1000;
        const double h = -prm.T / steps;
        auto f = [](double v) { return -(1.0 - v * v); };
        double margin = std::abs(1.0 - a * p);
        for (int s = 0; s < steps; ++s) {
            double k1 = f(p), k2 = f(p + 0.5 * h * k1), k3 = f(p + 0.5 * h * k2), k4 = f(p + h * k3);
            p += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            margin = std::min(margin, std::abs(1.0 - a * p));
        }
        if (margin < prm.c_min)
            throw InvertibilityError("coupled_z: |1 - alpha p| = " + std::to_string(margin) + " below c_min",
                                     margin);
    }

    ProblemSpec s;
    s.name = "coupled_z";
    s.n = 1;
    s.k = 1;
    s.T = prm.T;
    s.x0 = scalar_vec(prm.x0);
    s.b = [](double, const Vec&, double y, double, const Vec& u) { return scalar_vec(u[0] - y); };
    s.sigma = [a](double, const Vec& x, double, double z, const Vec& u) { return scalar_vec(a * z + x[0] + u[0]); };
    s.g = [](double, const Vec& x, double, double, const Vec& u) { return 0.5 * u[0] * u[0] + x[0]; };
    s.phi = [](const Vec& x) { return x[0]; };
    s.b_x = [](double, const Vec&, double, double, const Vec&) { return scalar_mat(0.0); };
    s.sigma_x = [](double, const Vec&, double, double, const Vec&) { return scalar_mat(1.0); };
    s.b_y = [](double, const Vec&, double, double, const Vec&) { return scalar_vec(-1.0); };
    s.b_z = [](double, const Vec&, double, double, const Vec&) { return scalar_vec(0.0); };
    s.sigma_y = [](double, const Vec&, double, double, const Vec&) { return scalar_vec(0.0); };
    s.sigma_z = [a](double, const Vec&, double, double, const Vec&) { return scalar_vec(a); };
    s.g_x = [](double, const Vec&, double, double, const Vec&) { return scalar_vec(1.0); };
    s.g_y = [](double, const Vec&, double, double, const Vec&) { return 0.0; };
    s.g_z = [](double, const Vec&, double, double, const Vec&) { return 0.0; };
    s.phi_x = [](const Vec&) { return scalar_vec(1.0); };
    auto zero_h = [](double, const Vec&, double, double, const Vec&) {
        return std::vector<Mat>{Mat::Zero(3, 3)};
    };
    s.b_hess = s.sigma_hess = zero_h;
    s.g_hess = [](double, const Vec&, double, double, const Vec&) { return Mat(Mat::Zero(3, 3)); };
    s.phi_xx = [](const Vec&) { return scalar_mat(0.0); };
    s.growth_L = 2.0 + std::abs(a);
    s.control_set = ControlSet::finite({scalar_vec(-1.0), scalar_vec(0.0), scalar_vec(1.0)});
    s.sigma_form = SigmaForm::LINEAR_IN_Z;
    s.linear = LinearInZ{[a](double) { return scalar_vec(a); },
                         [](double, const Vec& x, double, const Vec& u) { return scalar_vec(x[0] + u[0]); }};
    s.forward_depends_on_yz = true;
    s.driver_depends_on_yz = false;
    s.sigma_free_of_z = (a == 0.0);

    BenchmarkProblem bp;
    bp.spec = s;
    // With p = 1, q = 0, P = 0 the generalized Hamiltonian gap is u^2/2 + u - (ubar^2/2 + ubar),
    // minimized over {-1, 0, 1} at -1.
    bp.optimal = ControlLaw::constant(scalar_vec(-1.0));
    bp.adjoint_p = [](double, const Vec&) { return scalar_vec(1.0); };
    return bp;
}

ValidationReport validate_spec(const ProblemSpec& s, int probes, SeedSpec seed) {
    if (probes < 1) throw std::invalid_argument("validate_spec: probes must be at least 1");
    ValidationReport rep;
    rep.probes = probes;
    std::mt19937_64 eng(seed.root ^ 0x5DEECE66DULL);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    const int n = s.n;

    auto note = [&rep](double mm, const std::string& what) {
        if (mm > rep.max_derivative_mismatch) {
            rep.max_derivative_mismatch = mm;
            rep.worst_derivative = what;
        }
    };

    for (int pr = 0; pr < probes; ++pr) {
        double t = ud(eng) * s.T;
        Vec x(n);
        for (int i = 0; i < n; ++i) x[i] = nd(eng);
        double y = nd(eng), z = nd(eng);
        Vec u;
        if (s.control_set.kind == ControlSet::Kind::FINITE) {
            const auto& pts = s.control_set.points;
            u = pts[static_cast<std::size_t>(ud(eng) * pts.size()) % pts.size()];
        } else {
            u = Vec(s.control_set.dim());
            for (int a = 0; a < u.size(); ++a)
                u[a] = s.control_set.lo[a] + ud(eng) * (s.control_set.hi[a] - s.control_set.lo[a]);
        }

        Jet j = eval_jet(s, t, x, y, z, u);
        bool finite = j.b.allFinite() && j.s.allFinite() && std::isfinite(j.g) && j.bx.allFinite() &&
                      j.sx.allFinite() && j.by.allFinite() && j.bz.allFinite() && j.sy.allFinite() &&
                      j.sz.allFinite() && j.gx.allFinite() && std::isfinite(j.gy) && std::isfinite(j.gz) &&
                      std::isfinite(s.phi(x)) && s.phi_x(x).allFinite();
        if (!finite) throw EvaluatorError("non-finite coefficient at " + describe_point(t, x, y, z, u));

        // first partials against central differences of the values
        for (int c = 0; c < n + 2; ++c) {
            double h = 1e-6 * std::max(1.0, std::abs(w_coord(x, y, z, c)));
            WPoint pp = shift(x, y, z, c, h), pm = shift(x, y, z, c, -h);
            Vec db = (s.b(t, pp.x, pp.y, pp.z, u) - s.b(t, pm.x, pm.y, pm.z, u)) / (2 * h);
            Vec ds = (s.sigma(t, pp.x, pp.y, pp.z, u) - s.sigma(t, pm.x, pm.y, pm.z, u)) / (2 * h);
            double dg = (s.g(t, pp.x, pp.y, pp.z, u) - s.g(t, pm.x, pm.y, pm.z, u)) / (2 * h);
            for (int r = 0; r < n; ++r) {
                double ab = c < n ? j.bx(r, c) : (c == n ? j.by[r] : j.bz[r]);
                double as = c < n ? j.sx(r, c) : (c == n ? j.sy[r] : j.sz[r]);
                note(mismatch(ab, db[r]), "b");
                note(mismatch(as, ds[r]), "sigma");
            }
            double ag = c < n ? j.gx[c] : (c == n ? j.gy : j.gz);
            note(mismatch(ag, dg), "g");
        }
        Vec px = s.phi_x(x);
        for (int c = 0; c < n; ++c) {
            double h = 1e-6 * std::max(1.0, std::abs(x[c]));
            Vec xp = x, xm = x;
            xp[c] += h;
            xm[c] -= h;
            note(mismatch(px[c], (s.phi(xp) - s.phi(xm)) / (2 * h)), "phi_x");
        }

        // second partials against central differences of the first partials
        if (s.b_hess && s.sigma_hess && s.g_hess) {
            auto Hb = s.b_hess(t, x, y, z, u);
            auto Hs = s.sigma_hess(t, x, y, z, u);
            Mat Hg = s.g_hess(t, x, y, z, u);
            for (int c = 0; c < n + 2; ++c) {
                double h = 1e-5 * std::max(1.0, std::abs(w_coord(x, y, z, c)));
                WPoint pp = shift(x, y, z, c, h), pm = shift(x, y, z, c, -h);
                Mat gbp = vector_gradient(s.b_x, s.b_y, s.b_z, t, pp.x, pp.y, pp.z, u);
                Mat gbm = vector_gradient(s.b_x, s.b_y, s.b_z, t, pm.x, pm.y, pm.z, u);
                Mat gsp = vector_gradient(s.sigma_x, s.sigma_y, s.sigma_z, t, pp.x, pp.y, pp.z, u);
                Mat gsm = vector_gradient(s.sigma_x, s.sigma_y, s.sigma_z, t, pm.x, pm.y, pm.z, u);
                Vec ggp = scalar_gradient(s, t, pp.x, pp.y, pp.z, u);
                Vec ggm = scalar_gradient(s, t, pm.x, pm.y, pm.z, u);
                for (int r = 0; r < n + 2; ++r) {
                    for (int comp = 0; comp < n; ++comp) {
                        note(mismatch(Hb[comp](r, c), (gbp(comp, r) - gbm(comp, r)) / (2 * h)), "b_hess");
                        note(mismatch(Hs[comp](r, c), (gsp(comp, r) - gsm(comp, r)) / (2 * h)), "sigma_hess");
                    }
                    note(mismatch(Hg(r, c), (ggp[r] - ggm[r]) / (2 * h)), "g_hess");
                }
            }
            if (s.phi_xx) {
                Mat Hp = s.phi_xx(x);
                for (int c = 0; c < n; ++c) {
                    double h = 1e-5 * std::max(1.0, std::abs(x[c]));
                    Vec xp = x, xm = x;
                    xp[c] += h;
                    xm[c] -= h;
                    Vec d = (s.phi_x(xp) - s.phi_x(xm)) / (2 * h);
                    for (int r = 0; r < n; ++r) note(mismatch(Hp(r, c), d[r]), "phi_xx");
                }
            }
        }

        double scale = s.growth_L * (1.0 + x.norm() + std::abs(y) + std::abs(z) + u.norm());
        rep.max_growth_ratio = std::max({rep.max_growth_ratio, j.b.norm() / scale, j.s.norm() / scale,
                                         std::abs(j.g) / scale});

        if (s.sigma_form == SigmaForm::LINEAR_IN_Z && s.linear) {
            Vec rec = s.linear->A(t) * z + s.linear->sigma1(t, x, y, u);
            rep.max_linear_reconstruction =
                std::max(rep.max_linear_reconstruction, (rec - j.s).cwiseAbs().maxCoeff());
        }
    }
    rep.derivatives_ok = rep.max_derivative_mismatch <= 1e-4;
    rep.growth_ok = rep.max_growth_ratio <= 1.0;
    if (s.sigma_form == SigmaForm::LINEAR_IN_Z)
        rep.linear_ok = s.linear.has_value() && rep.max_linear_reconstruction <= 1e-14;
    return rep;
}

}  // namespace fbsmp
