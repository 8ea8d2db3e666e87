#include "fbsmp/regression.hpp"

#include <algorithm>
#include <cmath>

namespace fbsmp {

namespace {

void enumerate(int vars, std::vector<int>& cur, int pos, int left, std::vector<std::vector<int>>& out) {
    if (pos == vars) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; e <= left; ++e) {
        cur[pos] = e;
        enumerate(vars, cur, pos + 1, left - e, out);
    }
    cur[pos] = 0;
}

}  // namespace

void PolyBasis::row(const double* raw, double* out) const {
    const int v = static_cast<int>(kept.size());
    double z[64];
    for (int a = 0; a < v; ++a) z[a] = std::clamp((raw[kept[a]] - mean[a]) / scale[a], lo[a], hi[a]);
    for (std::size_t j = 0; j < exponents.size(); ++j) {
        double p = 1.0;
        for (int a = 0; a < v; ++a)
            for (int e = 0; e < exponents[j][a]; ++e) p *= z[a];
        out[j] = p;
    }
}

double PolyFunction::operator()(const double* raw) const {
    double row[512];
    basis->row(raw, row);
    double s = 0.0;
    for (int j = 0; j < coef.size(); ++j) s += coef[j] * row[j];
    return s;
}

NodeRegression::NodeRegression(const Eigen::MatrixXd& F, int degree) : basis_(std::make_shared<PolyBasis>()) {
    const int M = static_cast<int>(F.rows());
    PolyBasis& B = *basis_;
    std::vector<Eigen::VectorXd> kept_z;
    for (int c = 0; c < F.cols(); ++c) {
        double mu = F.col(c).mean();
        double sd = std::sqrt((F.col(c).array() - mu).square().mean());
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mu)))) continue;
        Eigen::VectorXd z = (F.col(c).array() - mu) / sd;
        bool dup = false;
        for (const auto& k : kept_z)
            if ((z - k).cwiseAbs().maxCoeff() < 1e-9) dup = true;
        if (dup) continue;
        kept_z.push_back(std::move(z));
        B.kept.push_back(c);
        B.mean.push_back(mu);
        B.scale.push_back(sd);
        B.lo.push_back(kept_z.back().minCoeff());
        B.hi.push_back(kept_z.back().maxCoeff());
    }
    const int v = static_cast<int>(B.kept.size());
    std::vector<int> cur(v, 0);
    enumerate(v, cur, 0, degree, B.exponents);
    // intercept first, then by total degree
    std::stable_sort(B.exponents.begin(), B.exponents.end(), [](const auto& a, const auto& b) {
        int sa = 0, sb = 0;
        for (int e : a) sa += e;
        for (int e : b) sb += e;
        return sa < sb;
    });

    const int nb = B.size();
    design_.resize(M, nb);
    std::vector<double> raw(F.cols()), row(nb);
    for (int m = 0; m < M; ++m) {
        for (int c = 0; c < F.cols(); ++c) raw[c] = F(m, c);
        B.row(raw.data(), row.data());
        for (int j = 0; j < nb; ++j) design_(m, j) = row[j];
    }

    Eigen::MatrixXd G = design_.transpose() * design_ / static_cast<double>(M);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-10 * hi)) {
        ridge_ = true;
        G += 1e-8 * Eigen::MatrixXd::Identity(nb, nb);
    }
    gram_inv_ = G.ldlt().solve(Eigen::MatrixXd::Identity(nb, nb));
    leverage_ = ((design_ * gram_inv_).array() * design_.array()).rowwise().sum() / static_cast<double>(M);
}

Eigen::VectorXd NodeRegression::coef(const Eigen::VectorXd& y) const {
    Eigen::VectorXd rhs = design_.transpose() * y / static_cast<double>(design_.rows());
    return gram_inv_ * rhs;
}

Eigen::VectorXd NodeRegression::fitted_se(const Eigen::VectorXd& y) const {
    const int M = paths();
    const int nb = basis_size();
    double rss = (y - fitted(y)).squaredNorm();
    double s2 = M > nb ? rss / (M - nb) : 0.0;
    return (s2 * leverage_.array().max(0.0)).sqrt();
}

NodeRegression::Weighted NodeRegression::weighted(const Eigen::VectorXd& w) const {
    const int nb = basis_size();
    Weighted out{this, w, {}, false};
    Eigen::MatrixXd WD = w.asDiagonal() * design_;
    Eigen::MatrixXd G = WD.transpose() * WD / static_cast<double>(paths());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 1e-10 * hi)) {
        out.ridge = true;
        G += 1e-8 * std::max(hi, 1e-300) * Eigen::MatrixXd::Identity(nb, nb);
    }
    out.gram_inv = G.ldlt().solve(Eigen::MatrixXd::Identity(nb, nb));
    return out;
}

Eigen::VectorXd NodeRegression::Weighted::coef(const Eigen::VectorXd& y) const {
    Eigen::VectorXd rhs = base->design_.transpose() * (w.array() * y.array()).matrix() / static_cast<double>(w.size());
    return gram_inv * rhs;
}

Eigen::VectorXd NodeRegression::Weighted::fitted_se(const Eigen::VectorXd& y) const {
    const int M = static_cast<int>(w.size());
    const int nb = base->basis_size();
    Eigen::VectorXd c = coef(y);
    double rss = (y.array() - w.array() * (base->design_ * c).array()).square().sum();
    double s2 = M > nb ? rss / (M - nb) : 0.0;
    Eigen::VectorXd lev = ((base->design_ * gram_inv).array() * base->design_.array()).rowwise().sum() / M;
    return (s2 * lev.array().max(0.0)).sqrt();
}

}  // namespace fbsmp
