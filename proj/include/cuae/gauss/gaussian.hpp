#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace cuae::gauss {

/// Diagonal Gaussian parameterized by mean and per-dimension log variance.
/// Log variance keeps the scale unconstrained, which is what network heads
/// emit and what the KL formulas below consume directly.
struct DiagGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_var;

  DiagGaussian() = default;
  DiagGaussian(Eigen::VectorXd m, Eigen::VectorXd lv);

  int dim() const { return static_cast<int>(mean.size()); }
  Eigen::VectorXd variance() const { return log_var.array().exp().matrix(); }

  /// Zero mean, unit variance in n dimensions.
  static DiagGaussian standard(int n);
};

/// Gaussian with a full (dense, symmetric) covariance.
struct FullGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
};

/// Finite mixture of full-covariance Gaussians over a shared space.
struct GaussianMixture {
  Eigen::VectorXd weights;               // nonnegative, sums to 1
  std::vector<FullGaussian> components;  // all the same dimension

  int dim() const { return components.empty() ? 0 : components.front().dim(); }
  int size() const { return static_cast<int>(components.size()); }

  /// Throws std::invalid_argument when weights or component shapes are
  /// inconsistent (negative weight, sum far from 1, mismatched dims).
  void validate() const;
};

/// Probability vector over a finite set of categories.
struct DiscreteDist {
  Eigen::VectorXd probs;

  explicit DiscreteDist(Eigen::VectorXd p);
  DiscreteDist() = default;
  int size() const { return static_cast<int>(probs.size()); }
};

/// log N(z; mu, diag(exp(log_var)))
double log_density_diag(const DiagGaussian& g, const Eigen::VectorXd& z);

/// log N(z; mu, cov). Throws std::runtime_error when cov is not positive
/// definite (Cholesky failure).
double log_density_full(const FullGaussian& g, const Eigen::VectorXd& z);

/// KL(q || p) between diagonal Gaussians of equal dimension.
double kl_diag(const DiagGaussian& q, const DiagGaussian& p);

/// KL(q || p) between discrete distributions. Terms with q[c] = 0 contribute
/// zero; q[c] > 0 with p[c] = 0 is an error (infinite divergence).
double kl_discrete(const DiscreteDist& q, const DiscreteDist& p);

/// log sum_c w_c N(z; mu_c, cov_c), evaluated via log-sum-exp so small
/// densities do not underflow. Components with zero weight are skipped;
/// a singular component covariance raises an error naming the component.
double mixture_log_density(const GaussianMixture& m, const Eigen::VectorXd& z);

/// Draw one sample from the mixture: pick a component by weight, then sample
/// from it through the covariance Cholesky factor.
Eigen::VectorXd sample_mixture(const GaussianMixture& m, std::mt19937_64& rng);

}  // namespace cuae::gauss
