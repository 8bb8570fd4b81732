#include "cuae/postprocess/nll.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cuae::post {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// Smallest log density still representable as a normal double; anything
// below this is treated as a full underflow.
const double kMinLogDensity = std::log(std::numeric_limits<double>::min());

double log_density_2d(const Eigen::Vector2d& r, const Eigen::Matrix2d& cov) {
  const double a = cov(0, 0), b = cov(0, 1), d = cov(1, 1);
  const double det = a * d - b * b;
  if (!(det > 0.0) || !(a > 0.0))
    throw std::runtime_error("nll: step covariance is not positive definite");
  const double quad =
      (d * r.x() * r.x() - 2.0 * b * r.x() * r.y() + a * r.y() * r.y()) / det;
  return -(kLog2Pi + 0.5 * std::log(det) + 0.5 * quad);
}

double log_density_iso(const Eigen::Vector2d& r) {
  return -(kLog2Pi + 0.5 * r.squaredNorm());
}

// Shared checks: one weight per candidate, matching horizons, covariances
// either absent or one list per candidate covering the horizon.
void check_mixture(const std::vector<Trajectory>& trajs,
                   const StepCovs& covs, const Eigen::VectorXd& weights,
                   const Trajectory& y, int idx) {
  const int M = static_cast<int>(trajs.size());
  if (M == 0) throw std::invalid_argument("nll: no candidates");
  for (const Trajectory& c : trajs)
    if (c.rows() != y.rows())
      throw std::invalid_argument("nll: candidate horizon mismatch");
  if (weights.size() != M)
    throw std::invalid_argument("nll: weight count mismatch");
  if ((weights.array() < 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("nll: weights are not a simplex");
  if (!covs.empty()) {
    if (static_cast<int>(covs.size()) != M)
      throw std::invalid_argument("nll: covariance count mismatch");
    for (const auto& per_step : covs)
      if (static_cast<int>(per_step.size()) <= idx)
        throw std::invalid_argument("nll: covariances do not cover horizon");
  }
}

double mixture_nll_at(const std::vector<Trajectory>& trajs,
                      const StepCovs& covs, const Eigen::VectorXd& weights,
                      const Trajectory& y, double horizon_s) {
  const int idx = horizon_index(horizon_s, static_cast<int>(y.rows()));
  check_mixture(trajs, covs, weights, y, idx);

  const int M = static_cast<int>(trajs.size());
  std::vector<double> terms;
  terms.reserve(M);
  for (int c = 0; c < M; ++c) {
    if (weights[c] <= 0.0) continue;
    const Eigen::Vector2d r =
        (y.row(idx) - trajs[c].row(idx)).transpose();
    const double ld =
        covs.empty() ? log_density_iso(r) : log_density_2d(r, covs[c][idx]);
    terms.push_back(std::log(weights[c]) + ld);
  }
  if (terms.empty()) return kNllSentinel;
  double hi = terms[0];
  for (double t : terms) hi = std::max(hi, t);
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  const double lse = hi + std::log(acc);
  if (lse < kMinLogDensity) return kNllSentinel;
  return -lse;
}

}  // namespace

int horizon_index(double horizon_s, int n_steps) {
  const int idx = static_cast<int>(std::lround(horizon_s * 10.0)) - 1;
  if (idx < 0 || idx >= n_steps)
    throw std::invalid_argument("horizon " + std::to_string(horizon_s) +
                                " s is outside the prediction window");
  return idx;
}

double winner_nll(const PredictionSet& pred, const Trajectory& y,
                  double horizon_s) {
  const int idx = horizon_index(horizon_s, static_cast<int>(y.rows()));
  const int M = static_cast<int>(pred.trajs.size());
  if (M == 0) throw std::invalid_argument("winner_nll: no candidates");
  for (const Trajectory& c : pred.trajs)
    if (c.rows() != y.rows())
      throw std::invalid_argument("winner_nll: candidate horizon mismatch");
  if (!pred.step_covs.empty()) {
    if (static_cast<int>(pred.step_covs.size()) != M)
      throw std::invalid_argument("winner_nll: covariance count mismatch");
    for (const auto& per_step : pred.step_covs)
      if (static_cast<int>(per_step.size()) <= idx)
        throw std::invalid_argument(
            "winner_nll: covariances do not cover horizon");
  }

  int win = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int c = 0; c < M; ++c) {
    const double fde = (pred.trajs[c].row(idx) - y.row(idx)).norm();
    if (fde < best) {
      best = fde;
      win = c;
    }
  }
  const Eigen::Vector2d r = (y.row(idx) - pred.trajs[win].row(idx)).transpose();
  const double ld = pred.step_covs.empty()
                        ? log_density_iso(r)
                        : log_density_2d(r, pred.step_covs[win][idx]);
  return -ld;
}

double mixture_nll(const PredictionSet& pred, const Trajectory& y,
                   double horizon_s) {
  return mixture_nll_at(pred.trajs, pred.step_covs, pred.weights, y,
                        horizon_s);
}

double mixture_nll(const OutputGmm& out, const Trajectory& y,
                   double horizon_s) {
  return mixture_nll_at(out.centroids, out.step_covs, out.weights, y,
                        horizon_s);
}

}  // namespace cuae::post
