#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "cuae/types.hpp"

namespace cuae::post {

struct KmeansResult {
  std::vector<Eigen::VectorXd> centroids;
  std::vector<int> assignment;  // per point, index into centroids
  std::vector<int> counts;      // per centroid
  double sse = 0.0;
  int n_iter = 0;
};

/// Lloyd's algorithm with k-means++ seeding, deterministic for a given seed.
/// Assignment ties go to the lowest centroid index. A cluster left empty by
/// an update step is reseeded at the point farthest from its assigned
/// centroid. The within-cluster SSE is verified non-increasing across
/// iterations (std::logic_error on violation — that would be a bug here, not
/// bad input).
KmeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int n_clusters,
                    uint64_t seed, int max_iter = 100);

/// Cluster K decoded trajectories into M representatives. Each trajectory is
/// flattened to a 2T vector for the metric; cluster weights are exactly
/// count/K, and each cluster carries per-timestep 2x2 scatter around its
/// centroid (plus a small diagonal so singleton clusters stay usable in
/// likelihoods).
PredictionSet cluster_trajectories(const std::vector<Trajectory>& trajs,
                                   int n_clusters, uint64_t seed);

}  // namespace cuae::post
