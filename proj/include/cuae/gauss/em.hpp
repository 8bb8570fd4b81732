#pragma once

#include <cstdint>
#include <vector>

#include "cuae/gauss/gaussian.hpp"

namespace cuae::gauss {

struct EmOptions {
  int max_iter = 200;
  double tol = 1e-6;      // absolute change in mean log-likelihood
  double cov_reg = 1e-6;  // diagonal loading on every M-step covariance
};

struct EmTrace {
  std::vector<double> mean_log_lik;  // one entry per E-step
  int n_iter = 0;
  int n_reinit = 0;
};

/// Fit a full-covariance mixture by EM. Means initialize at k-means centroids
/// (same seed), covariances at the within-cluster scatter. The mean
/// log-likelihood is checked non-decreasing across iterations. A component
/// whose responsibility mass collapses is reinitialized at the sample with
/// the lowest current likelihood; after three reinitializations the fit
/// fails with std::runtime_error.
GaussianMixture fit_gmm_em(const std::vector<Eigen::VectorXd>& samples,
                           int n_components, uint64_t seed,
                           const EmOptions& opts = {},
                           EmTrace* trace = nullptr);

namespace detail {

/// E-step: responsibilities (one row per sample) and per-sample
/// log-likelihood under the current mixture. Rows are independent, each with
/// a fixed reduction order, so the parallel kernel is bit-identical to the
/// serial one.
void em_estep_serial(const GaussianMixture& mix,
                     const std::vector<Eigen::VectorXd>& samples,
                     Eigen::MatrixXd& resp, Eigen::VectorXd& log_lik);
void em_estep_parallel(const GaussianMixture& mix,
                       const std::vector<Eigen::VectorXd>& samples,
                       Eigen::MatrixXd& resp, Eigen::VectorXd& log_lik);

}  // namespace detail

}  // namespace cuae::gauss
