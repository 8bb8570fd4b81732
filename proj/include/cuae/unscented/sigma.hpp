#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cuae/gauss/gaussian.hpp"

namespace cuae::unscented {

/// Deterministic sigma points of a diagonal Gaussian, one per column:
/// column 0 is the mean, columns 1..n step +sqrt(n * var_j) along axis j,
/// columns n+1..2n step -sqrt(n * var_j). With the implied weights
/// (0 on the center, 1/(2n) elsewhere) the first two moments are exact.
Eigen::MatrixXd sigma_points(const gauss::DiagGaussian& g);

/// Invert sigma_points: mean and per-axis variance recovered from a full
/// n x (2n+1) point set laid out as above.
std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_moments(
    const Eigen::MatrixXd& points);

/// Pick the axes for a K-point subsample. K must be odd (the center plus
/// complete +/- pairs) and at most 2n+1. Returns (K-1)/2 distinct axis
/// indices in ascending order.
std::vector<int> subsample_axes(int dim, int n_points, std::mt19937_64& rng);

/// Columns [center, +axes..., -axes...] of a full sigma-point set for the
/// chosen axes.
Eigen::MatrixXd subsample_points(const Eigen::MatrixXd& points,
                                 const std::vector<int>& axes);

}  // namespace cuae::unscented
