#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

namespace fbsmp {

struct BasisSpec {
    int degree = 2;
};

// Feature transform and monomial list shared by a node's fitted functions.
struct PolyBasis {
    std::vector<int> kept;
    std::vector<double> mean, scale;
    // Standardised training range; evaluation clamps to it instead of extrapolating.
    std::vector<double> lo, hi;
    std::vector<std::vector<int>> exponents;

    int size() const { return static_cast<int>(exponents.size()); }
    void row(const double* raw, double* out) const;
};

// A fitted polynomial of the raw features; cheap to copy, outlives the design matrix.
struct PolyFunction {
    std::shared_ptr<const PolyBasis> basis;
    Eigen::VectorXd coef;

    double operator()(const double* raw) const;
};

// Least-squares projection onto polynomials (total degree <= d) of the features at one node.
// Features are centred and scaled first. A feature that is constant across paths, or that
// duplicates an earlier feature, is dropped. If the Gram matrix is still singular the solve
// falls back to ridge with lambda = 1e-8 and ridge() reports it.
class NodeRegression {
public:
    NodeRegression(const Eigen::MatrixXd& features, int degree);

    int basis_size() const { return basis_->size(); }
    int paths() const { return static_cast<int>(design_.rows()); }
    bool ridge() const { return ridge_; }

    Eigen::VectorXd coef(const Eigen::VectorXd& y) const;
    Eigen::VectorXd fitted(const Eigen::VectorXd& y) const { return design_ * coef(y); }
    PolyFunction function(const Eigen::VectorXd& y) const { return {basis_, coef(y)}; }
    // Standard error of each fitted value, from the residual variance of y.
    Eigen::VectorXd fitted_se(const Eigen::VectorXd& y) const;

    // Projection of y onto w * psi(features): coefficients c minimise sum (y - w psi c)^2, and the
    // fitted values are psi c without the weight. With w the Brownian increment this estimates
    // E[y dB | X] / dt without the dB^2 noise of regressing y dB / dt on psi.
    struct Weighted {
        const NodeRegression* base;
        Eigen::VectorXd w;
        Eigen::MatrixXd gram_inv;
        bool ridge = false;

        Eigen::VectorXd coef(const Eigen::VectorXd& y) const;
        Eigen::VectorXd fitted(const Eigen::VectorXd& y) const { return base->design_ * coef(y); }
        PolyFunction function(const Eigen::VectorXd& y) const { return {base->basis_, coef(y)}; }
        Eigen::VectorXd fitted_se(const Eigen::VectorXd& y) const;
    };
    Weighted weighted(const Eigen::VectorXd& w) const;

private:
    std::shared_ptr<PolyBasis> basis_;
    Eigen::MatrixXd design_;
    Eigen::MatrixXd gram_inv_;  // (Phi^T Phi / M)^{-1}, ridge-regularised if needed
    Eigen::VectorXd leverage_;  // diag(Phi G^{-1} Phi^T) / M
    bool ridge_ = false;
};

}  // namespace fbsmp
