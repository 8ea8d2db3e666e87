#pragma once

#include <Eigen/Dense>

namespace fbsmp {

// Small fixed-capacity types keep per-(path, node) evaluations off the heap.
// State dimension n is limited to kMaxDim; Hessians over (x, y, z) are (n+2)x(n+2).
inline constexpr int kMaxDim = 8;
inline constexpr int kMaxJet = kMaxDim + 2;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxJet, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxJet, kMaxJet>;

}  // namespace fbsmp
