#pragma once

#include "cuae/gauss/gaussian.hpp"

namespace cuae::gauss {

/// Condition a joint mixture over (z1, z2) on an observed z2.
///
/// The joint splits as z1 = first `split` coordinates, z2 = the rest. Each
/// component conditions by the Schur complement,
///   mu_{1|2} = mu1 + S12 S22^{-1} (z2 - mu2)
///   S_{1|2}  = S11 - S12 S22^{-1} S21,
/// and the component weights are reweighted by the marginal density of z2
/// under that component, then renormalized.
///
/// Covariances are used as stored. A component whose S22 fails its Cholesky
/// factorization gets one retry with a small diagonal bump; a second failure
/// raises an error naming the component. When every reweighted weight
/// underflows to zero (z2 far outside the mixture's support) this raises
/// std::runtime_error.
GaussianMixture condition_mixture(const GaussianMixture& joint, int split,
                                  const Eigen::VectorXd& z2);

/// Marginal mixture over the last (dim - split) coordinates.
GaussianMixture marginalize_tail(const GaussianMixture& joint, int split);

/// log p(z2) under the tail marginal of the joint; same component covariance
/// handling as condition_mixture.
double marginal_log_density(const GaussianMixture& joint, int split,
                            const Eigen::VectorXd& z2);

}  // namespace cuae::gauss
