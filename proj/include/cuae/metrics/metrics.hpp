#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cuae/data/generator.hpp"
#include "cuae/gauss/gaussian.hpp"
#include "cuae/model/model.hpp"
#include "cuae/types.hpp"

namespace cuae::metrics {

/// Smallest mean-over-time Euclidean distance between any candidate and y.
double min_ade(const std::vector<Trajectory>& candidates, const Trajectory& y);
/// Smallest final-timestep Euclidean distance between any candidate and y.
double min_fde(const std::vector<Trajectory>& candidates, const Trajectory& y);

/// Horizons of the NLL report columns, seconds.
constexpr double kHorizons[3] = {1.0, 2.0, 3.0};

struct SceneMetrics {
  int64_t scene_id = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double mix_nll[3] = {0.0, 0.0, 0.0};
  double win_nll[3] = {0.0, 0.0, 0.0};
};

struct EvalConfig {
  model::PredictMode mode = model::PredictMode::kSigma;
  int n_samples = 17;
  int n_outputs = 0;  // 0 lets the pipeline derive the candidate count
  bool cluster = false;
  uint64_t seed = 0;
};

struct EvalReport {
  std::string variant;
  std::vector<SceneMetrics> rows;  // ascending scene_id
  SceneMetrics aggregate;          // unweighted column means over rows
  int n_sentinel = 0;              // mixture-NLL cells at the underflow sentinel
};

/// Forecast and score every scene. Deterministic for a given seed: each
/// scene's sampler is derived from (seed, scene_id), so results do not
/// depend on worker count or input order.
EvalReport evaluate(const model::Model& m,
                    const std::vector<data::SceneRecord>& scenes,
                    const EvalConfig& cfg,
                    const gauss::GaussianMixture* joint = nullptr);

namespace detail {
/// Reference single-threaded evaluation; bit-identical to evaluate().
EvalReport evaluate_serial(const model::Model& m,
                           const std::vector<data::SceneRecord>& scenes,
                           const EvalConfig& cfg,
                           const gauss::GaussianMixture* joint = nullptr);
}  // namespace detail

/// Per-scene report: header scene_id,variant,minADE,minFDE,mixNLL_1s,
/// mixNLL_2s,mixNLL_3s,winNLL_1s,winNLL_2s,winNLL_3s, rows ascending by id.
void write_metrics_csv(const std::string& path, const EvalReport& rep);
/// Same columns, single row, scene_id column reads "mean".
void write_summary_csv(const std::string& path, const EvalReport& rep);

/// Long-format candidate dump for plotting: one row per candidate and
/// timestep (scene_id,candidate,weight,t,x,y), same sampling as evaluate.
void write_predictions_csv(const std::string& path, const model::Model& m,
                           const std::vector<data::SceneRecord>& scenes,
                           const EvalConfig& cfg,
                           const gauss::GaussianMixture* joint = nullptr);

}  // namespace cuae::metrics
