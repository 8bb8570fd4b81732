#include "cuae/gauss/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cuae::gauss {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kDiagBump = 1e-6;

void check_split(const GaussianMixture& joint, int split) {
  joint.validate();
  if (split <= 0 || split >= joint.dim())
    throw std::invalid_argument("conditioning: split must lie strictly inside "
                                "the joint dimension, got " +
                                std::to_string(split) + " of " +
                                std::to_string(joint.dim()));
}

/// Cholesky of the z2 block of one component, with a single diagonal-bump
/// retry. The same factor backs both the conditional moments and the
/// marginal density so the two stay consistent.
Eigen::LLT<Eigen::MatrixXd> tail_llt(const Eigen::MatrixXd& s22, int c) {
  Eigen::LLT<Eigen::MatrixXd> llt(s22);
  if (llt.info() == Eigen::Success) return llt;
  Eigen::MatrixXd bumped = s22;
  bumped.diagonal().array() += kDiagBump;
  llt.compute(bumped);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("conditioning: component " + std::to_string(c) +
                             " has a singular z2 covariance block");
  return llt;
}

double tail_log_density(const Eigen::LLT<Eigen::MatrixXd>& llt,
                        const Eigen::VectorXd& mu2,
                        const Eigen::VectorXd& z2) {
  const Eigen::VectorXd u = llt.matrixL().solve(z2 - mu2);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (mu2.size() * kLog2Pi + log_det + u.squaredNorm());
}

}  // namespace

GaussianMixture condition_mixture(const GaussianMixture& joint, int split,
                                  const Eigen::VectorXd& z2) {
  check_split(joint, split);
  const int d = joint.dim();
  const int m = d - split;
  if (z2.size() != m)
    throw std::invalid_argument("condition_mixture: z2 has dimension " +
                                std::to_string(z2.size()) + ", expected " +
                                std::to_string(m));

  const int C = joint.size();
  GaussianMixture out;
  out.components.resize(C);
  Eigen::VectorXd log_w(C);
  for (int c = 0; c < C; ++c) {
    const auto& g = joint.components[c];
    const Eigen::VectorXd mu1 = g.mean.head(split);
    const Eigen::VectorXd mu2 = g.mean.tail(m);
    const Eigen::MatrixXd s11 = g.cov.topLeftCorner(split, split);
    const Eigen::MatrixXd s21 = g.cov.bottomLeftCorner(m, split);
    const Eigen::MatrixXd s22 = g.cov.bottomRightCorner(m, m);

    const auto llt = tail_llt(s22, c);
    // gain = S12 S22^{-1}, computed as (S22^{-1} S21)^T.
    const Eigen::MatrixXd gain = llt.solve(s21).transpose();
    auto& cond = out.components[c];
    cond.mean = mu1 + gain * (z2 - mu2);
    cond.cov = s11 - gain * s21;
    cond.cov = 0.5 * (cond.cov + cond.cov.transpose()).eval();  // symmetry

    const double lw = joint.weights[c] > 0.0
                          ? std::log(joint.weights[c]) +
                                tail_log_density(llt, mu2, z2)
                          : -std::numeric_limits<double>::infinity();
    log_w[c] = lw;
  }

  const double mx = log_w.maxCoeff();
  if (!std::isfinite(mx))
    throw std::runtime_error(
        "condition_mixture: observation has zero density under every "
        "component (outside the mixture's support)");
  Eigen::VectorXd w = (log_w.array() - mx).exp();
  const double total = w.sum();
  if (!(total > 0.0))
    throw std::runtime_error(
        "condition_mixture: all reweighted component weights underflowed");
  out.weights = w / total;
  return out;
}

GaussianMixture marginalize_tail(const GaussianMixture& joint, int split) {
  check_split(joint, split);
  const int m = joint.dim() - split;
  GaussianMixture out;
  out.weights = joint.weights;
  out.components.resize(joint.size());
  for (int c = 0; c < joint.size(); ++c) {
    out.components[c].mean = joint.components[c].mean.tail(m);
    out.components[c].cov = joint.components[c].cov.bottomRightCorner(m, m);
  }
  return out;
}

double marginal_log_density(const GaussianMixture& joint, int split,
                            const Eigen::VectorXd& z2) {
  check_split(joint, split);
  const int m = joint.dim() - split;
  if (z2.size() != m)
    throw std::invalid_argument("marginal_log_density: z2 has dimension " +
                                std::to_string(z2.size()) + ", expected " +
                                std::to_string(m));
  std::vector<double> terms;
  terms.reserve(joint.size());
  for (int c = 0; c < joint.size(); ++c) {
    if (joint.weights[c] <= 0.0) continue;
    const auto& g = joint.components[c];
    const auto llt = tail_llt(g.cov.bottomRightCorner(m, m), c);
    terms.push_back(std::log(joint.weights[c]) +
                    tail_log_density(llt, g.mean.tail(m), z2));
  }
  if (terms.empty())
    throw std::invalid_argument("marginal_log_density: all weights are zero");
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

}  // namespace cuae::gauss
