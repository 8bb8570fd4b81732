#pragma once

#include <vector>

#include "cuae/gauss/gaussian.hpp"
#include "cuae/model/model.hpp"
#include "cuae/types.hpp"

namespace cuae::model {

/// Mean over K decoded trajectories of the Gaussian NLL of each under
/// N(y, sigma^2 I), summed over all T*2 coordinates. sigma is a standard
/// deviation.
double loss_rec_samples(const std::vector<Trajectory>& decoded,
                        const Trajectory& y, double sigma);

/// NLL of the mean decoded trajectory under N(y, sigma^2 I) — the
/// distribution-level reconstruction used with sigma-point decoding.
double loss_rec_dist(const std::vector<Trajectory>& decoded,
                     const Trajectory& y, double sigma);

/// Sum of per-component diagonal KLs (aligned by index) plus the discrete KL
/// between the component weight vectors.
double loss_kl_gmm(const LatentEncoding& post, const LatentEncoding& prior);

/// Index of the centroid closest to y by mean pointwise distance; ties go to
/// the lowest index.
int gmm_winner(const std::vector<Trajectory>& centroids, const Trajectory& y);

/// NLL of y under the winner component's per-timestep 2x2 Gaussians plus the
/// discrete KL against the winner's one-hot — which reduces to
/// -log w_phi[winner]. Throws when that weight is not positive.
double loss_rec_gmm(const OutputGmm& out, const Trajectory& y,
                    const gauss::DiscreteDist& w_phi);

}  // namespace cuae::model
