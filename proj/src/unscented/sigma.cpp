#include "cuae/unscented/sigma.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cuae::unscented {

Eigen::MatrixXd sigma_points(const gauss::DiagGaussian& g) {
  const int n = g.dim();
  if (n < 1) throw std::invalid_argument("sigma_points: empty Gaussian");
  Eigen::MatrixXd pts(n, 2 * n + 1);
  pts.colwise() = g.mean;
  const Eigen::ArrayXd step =
      (std::sqrt(static_cast<double>(n)) * (0.5 * g.log_var.array()).exp());
  for (int j = 0; j < n; ++j) {
    pts(j, 1 + j) += step[j];
    pts(j, 1 + n + j) -= step[j];
  }
  return pts;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> recover_moments(
    const Eigen::MatrixXd& points) {
  const int n = static_cast<int>(points.rows());
  if (points.cols() != 2 * n + 1)
    throw std::invalid_argument("recover_moments: expected " +
                                std::to_string(2 * n + 1) + " columns, got " +
                                std::to_string(points.cols()));
  // Center weight is zero; the 2n off-center points each carry 1/(2n).
  const Eigen::VectorXd mean =
      points.rightCols(2 * n).rowwise().sum() / (2.0 * n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  for (int c = 1; c <= 2 * n; ++c)
    var.array() += (points.col(c) - mean).array().square();
  var /= 2.0 * n;
  return {mean, var};
}

std::vector<int> subsample_axes(int dim, int n_points, std::mt19937_64& rng) {
  if (n_points < 3 || n_points % 2 == 0)
    throw std::invalid_argument(
        "subsample_axes: point count must be odd and at least 3 (center plus "
        "complete +/- pairs), got " + std::to_string(n_points));
  if (n_points > 2 * dim + 1)
    throw std::invalid_argument("subsample_axes: " + std::to_string(n_points) +
                                " points exceed the full set of " +
                                std::to_string(2 * dim + 1));
  const int m = (n_points - 1) / 2;
  std::vector<int> axes(dim);
  std::iota(axes.begin(), axes.end(), 0);
  // Partial Fisher-Yates: the first m entries end up a uniform subset.
  for (int i = 0; i < m; ++i) {
    std::uniform_int_distribution<int> pick(i, dim - 1);
    std::swap(axes[i], axes[pick(rng)]);
  }
  axes.resize(m);
  std::sort(axes.begin(), axes.end());
  return axes;
}

Eigen::MatrixXd subsample_points(const Eigen::MatrixXd& points,
                                 const std::vector<int>& axes) {
  const int n = static_cast<int>(points.rows());
  if (points.cols() != 2 * n + 1)
    throw std::invalid_argument("subsample_points: not a full sigma set");
  const int m = static_cast<int>(axes.size());
  Eigen::MatrixXd out(n, 1 + 2 * m);
  out.col(0) = points.col(0);
  for (int i = 0; i < m; ++i) {
    const int j = axes[i];
    if (j < 0 || j >= n)
      throw std::invalid_argument("subsample_points: axis " +
                                  std::to_string(j) + " out of range");
    out.col(1 + i) = points.col(1 + j);
    out.col(1 + m + i) = points.col(1 + n + j);
  }
  return out;
}

}  // namespace cuae::unscented
