#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuae/gauss/gaussian.hpp"
#include "cuae/model/model.hpp"
#include "cuae/types.hpp"

namespace cuae::expost {

/// Concatenated [posterior mean; prior mean] encodings, one row per training
/// example. The raw material for the joint mixture fit.
struct EncodingPairSet {
  Eigen::MatrixXd rows;     // N x 2n
  std::string provenance;   // split + checkpoint id, set by the caller

  int size() const { return static_cast<int>(rows.rows()); }
  int dim() const { return static_cast<int>(rows.cols()); }
};

/// Eval-mode pass over (x, y) pairs: row i = [mu_phi(x_i, y_i); mu_gamma(x_i)].
/// Deterministic; scene order is preserved. Parallelizes over examples.
EncodingPairSet collect_pairs(const model::Model& m,
                              const std::vector<SceneContext>& xs,
                              const std::vector<Trajectory>& ys);

namespace detail {
/// Reference single-threaded implementation; must match collect_pairs bit
/// for bit.
EncodingPairSet collect_pairs_serial(const model::Model& m,
                                     const std::vector<SceneContext>& xs,
                                     const std::vector<Trajectory>& ys);
}  // namespace detail

/// EM fit of the joint [z_phi; z_gamma] mixture. Requires at least
/// C * (dim + 1) rows.
gauss::GaussianMixture fit_joint(const EncodingPairSet& pairs,
                                 int n_components, uint64_t seed);

/// Among the 2n+1 sigma points of the prior encoding, the one with the
/// highest density under the joint's tail-block marginal. Ties go to the
/// lowest sigma index.
Eigen::VectorXd select_conditioning_sigma(const gauss::GaussianMixture& joint,
                                          const gauss::DiagGaussian& prior);

enum class CxpMode { kRandom, kUnscented };

/// Latent samples drawn from the conditional p(z1 | z2 = z_cond).
struct CxpSamples {
  Eigen::MatrixXd samples;     // n x S, one sample per column
  Eigen::VectorXd weights;     // S, sums to 1
  std::vector<int> component;  // conditional-mixture component per sample
};

/// Condition the joint on its tail block at z_cond, then sample. Random mode
/// draws n_samples ancestrally (component by weight, then Gaussian). Unscented
/// mode ignores n_samples: it keeps the conditional components with weight
/// >= 1e-3 (renormalized) and returns the full-covariance sigma points of
/// each, weighted w_c / (2n+1), with component provenance.
CxpSamples cxp_sample(const gauss::GaussianMixture& joint,
                      const Eigen::VectorXd& z_cond, int n_samples,
                      uint64_t seed, CxpMode mode);

/// Pairs CSV: one row per example, 17-significant-digit decimals, no header.
void write_pairs_csv(const std::string& path, const EncodingPairSet& pairs);
EncodingPairSet read_pairs_csv(const std::string& path);

}  // namespace cuae::expost
