#pragma once

#include <Eigen/Dense>

namespace discvae {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using RowX = Eigen::Matrix<S, 1, Eigen::Dynamic>;

using MatXf = MatX<float>;
using MatXd = MatX<double>;
using VecXf = VecX<float>;
using VecXd = VecX<double>;

// Log-variances are clamped to this range everywhere a Gaussian head is
// produced, so exp() stays finite and variances stay non-degenerate.
inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

}  // namespace discvae
