#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace cuae {

/// Agent positions over time, one row per timestep, columns (x, y). All
/// trajectories live in the scene's canonical frame: the agent's last
/// observed position at the origin, heading along +x.
using Trajectory = Eigen::MatrixX2d;

/// Conditioning input for one scene: the observed history plus side features
/// (ego speed, neighbor headings, lane flags — whatever the dataset packs).
struct SceneContext {
  Eigen::MatrixX2d history;   // H rows
  Eigen::VectorXd features;
};

/// Per-candidate, per-timestep 2x2 covariances. Outer index: candidate.
using StepCovs = std::vector<std::vector<Eigen::Matrix2d>>;

/// A set of forecast candidates for one scene. `step_covs` and `counts` are
/// populated when the set came out of clustering or a mixture decode; raw
/// sample sets carry trajectories and uniform weights only.
struct PredictionSet {
  std::vector<Trajectory> trajs;
  Eigen::VectorXd weights;
  StepCovs step_covs;          // empty when unavailable
  std::vector<int> counts;     // empty when unavailable
};

/// Mixture over trajectories: one centroid trajectory per component with
/// per-timestep Gaussian uncertainty.
struct OutputGmm {
  std::vector<Trajectory> centroids;
  StepCovs step_covs;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(centroids.size()); }
};

}  // namespace cuae
