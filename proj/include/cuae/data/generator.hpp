#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuae/types.hpp"

namespace cuae::data {

constexpr int kMaxBranches = 3;
constexpr double kDt = 0.1;  // seconds per step, fixed across the toolkit

struct GenConfig {
  int n_scenes = 7000;
  int n_branches = 3;            // available branch slots, 1..3
  Eigen::VectorXd branch_probs;  // size n_branches; empty means uniform
  double speed_min = 5.0;        // m/s
  double speed_max = 10.0;
  double noise_std = 0.15;       // m, iid on every future coordinate
  double heading_jitter = 0.25;  // rad, uniform around each slot's heading
  int history_len = 10;
  int horizon = 30;
  double val_frac = 1.0 / 7.0;
  uint64_t seed = 0;
};

/// One synthetic scene: a straight constant-speed approach ending at the
/// origin, then a constant-curvature arc toward the sampled branch heading,
/// with position noise. Branch geometry always fills kMaxBranches slots;
/// unavailable slots carry heading 0 with flag 0.
struct SceneRecord {
  int64_t scene_id = 0;
  Eigen::MatrixX2d history;         // H x 2
  Trajectory future;                // T x 2
  Eigen::VectorXd branch_geometry;  // (heading, flag) per slot
  int mode_label = 0;               // generating slot; diagnostics only
};

/// What models are allowed to see: history and branch geometry, no label.
SceneContext context_of(const SceneRecord& r);

struct Splits {
  std::vector<SceneRecord> train, val;
};

/// Deterministic from the seed: scene i draws from its own stream seeded
/// seed ^ i. The first (1 - val_frac) of the ids form the train split.
Splits generate(const GenConfig& cfg);

namespace detail {
SceneRecord generate_scene(const GenConfig& cfg, int64_t scene_id);
/// Reference single-threaded generation; bit-identical to generate().
Splits generate_serial(const GenConfig& cfg);
}  // namespace detail

/// Endpoint of the noiseless arc for one available branch slot, using the
/// scene's own speed (recovered from its history). The analytic target a
/// mixture component should reach.
Eigen::Vector2d branch_endpoint(const SceneRecord& r, int slot);

/// One row per scene: scene_id, H x 2 history, T x 2 future, per-slot
/// (heading, flag), mode label. Header mandatory; 9 significant digits.
void write_csv(const std::string& path,
               const std::vector<SceneRecord>& scenes);
/// Inverse of write_csv. Malformed rows raise errors naming the line; a
/// completely empty file is an empty list.
std::vector<SceneRecord> read_csv(const std::string& path);

}  // namespace cuae::data
