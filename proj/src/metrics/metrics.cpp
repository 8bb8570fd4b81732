#include "cuae/metrics/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "cuae/postprocess/nll.hpp"

namespace cuae::metrics {
namespace {

// Decorrelates per-scene sampling from the report seed so neither worker
// count nor scene order can change a scene's draw.
uint64_t scene_seed(uint64_t seed, int64_t scene_id) {
  return seed ^ (static_cast<uint64_t>(scene_id) * 0x9E3779B97F4A7C15ULL + 1);
}

void check_candidates(const std::vector<Trajectory>& candidates,
                      const Trajectory& y) {
  if (candidates.empty())
    throw std::invalid_argument("metrics: no candidates");
  if (y.rows() < 1) throw std::invalid_argument("metrics: empty ground truth");
  for (const Trajectory& c : candidates)
    if (c.rows() != y.rows())
      throw std::invalid_argument("metrics: candidate horizon mismatch");
}

SceneMetrics score_scene(const model::Model& m, const data::SceneRecord& rec,
                         const EvalConfig& cfg,
                         const gauss::GaussianMixture* joint) {
  model::PredictOpts po;
  po.mode = cfg.mode;
  po.n_samples = cfg.n_samples;
  po.n_outputs = cfg.n_outputs;
  po.cluster = cfg.cluster;
  po.seed = scene_seed(cfg.seed, rec.scene_id);

  const model::PredictResult pr = m.predict(data::context_of(rec), po, joint);
  const Trajectory& y = rec.future;

  SceneMetrics row;
  row.scene_id = rec.scene_id;
  row.min_ade = min_ade(pr.set.trajs, y);
  row.min_fde = min_fde(pr.set.trajs, y);
  for (int h = 0; h < 3; ++h) {
    row.mix_nll[h] = post::mixture_nll(pr.set, y, kHorizons[h]);
    row.win_nll[h] = post::winner_nll(pr.set, y, kHorizons[h]);
  }
  return row;
}

EvalReport assemble(const model::Model& m, std::vector<SceneMetrics> rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const SceneMetrics& a, const SceneMetrics& b) {
                     return a.scene_id < b.scene_id;
                   });
  EvalReport rep;
  rep.variant = model::variant_name(m.variant());
  rep.rows = std::move(rows);

  const double n = static_cast<double>(rep.rows.size());
  for (const SceneMetrics& r : rep.rows) {
    rep.aggregate.min_ade += r.min_ade / n;
    rep.aggregate.min_fde += r.min_fde / n;
    for (int h = 0; h < 3; ++h) {
      rep.aggregate.mix_nll[h] += r.mix_nll[h] / n;
      rep.aggregate.win_nll[h] += r.win_nll[h] / n;
      if (post::nll_is_sentinel(r.mix_nll[h])) ++rep.n_sentinel;
    }
  }
  rep.aggregate.scene_id = -1;
  return rep;
}

}  // namespace

double min_ade(const std::vector<Trajectory>& candidates,
               const Trajectory& y) {
  check_candidates(candidates, y);
  double best = std::numeric_limits<double>::infinity();
  for (const Trajectory& c : candidates)
    best = std::min(best, (c - y).rowwise().norm().mean());
  return best;
}

double min_fde(const std::vector<Trajectory>& candidates,
               const Trajectory& y) {
  check_candidates(candidates, y);
  const Eigen::Index last = y.rows() - 1;
  double best = std::numeric_limits<double>::infinity();
  for (const Trajectory& c : candidates)
    best = std::min(best, (c.row(last) - y.row(last)).norm());
  return best;
}

namespace detail {

EvalReport evaluate_serial(const model::Model& m,
                           const std::vector<data::SceneRecord>& scenes,
                           const EvalConfig& cfg,
                           const gauss::GaussianMixture* joint) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes");
  std::vector<SceneMetrics> rows(scenes.size());
  for (size_t i = 0; i < scenes.size(); ++i)
    rows[i] = score_scene(m, scenes[i], cfg, joint);
  return assemble(m, std::move(rows));
}

}  // namespace detail

EvalReport evaluate(const model::Model& m,
                    const std::vector<data::SceneRecord>& scenes,
                    const EvalConfig& cfg,
                    const gauss::GaussianMixture* joint) {
  if (scenes.empty()) throw std::invalid_argument("evaluate: no scenes");
  const int n = static_cast<int>(scenes.size());
  std::vector<SceneMetrics> rows(n);
  // Score one scene up front so configuration errors surface as ordinary
  // exceptions rather than inside the parallel region.
  rows[0] = score_scene(m, scenes[0], cfg, joint);

  std::atomic<bool> failed{false};
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (int i = 1; i < n; ++i) {
    if (failed.load(std::memory_order_relaxed)) continue;
    try {
      rows[i] = score_scene(m, scenes[i], cfg, joint);
    } catch (...) {
#pragma omp critical(cuae_eval_err)
      {
        if (!failed.exchange(true)) err = std::current_exception();
      }
    }
  }
  if (failed.load()) std::rethrow_exception(err);
  return assemble(m, std::move(rows));
}

namespace {

void write_row(std::ofstream& out, const std::string& id,
               const std::string& variant, const SceneMetrics& r) {
  char buf[64];
  out << id << ',' << variant;
  const double vals[8] = {r.min_ade,    r.min_fde,    r.mix_nll[0],
                          r.mix_nll[1], r.mix_nll[2], r.win_nll[0],
                          r.win_nll[1], r.win_nll[2]};
  for (double v : vals) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << ',' << buf;
  }
  out << '\n';
}

constexpr const char* kHeader =
    "scene_id,variant,minADE,minFDE,mixNLL_1s,mixNLL_2s,mixNLL_3s,"
    "winNLL_1s,winNLL_2s,winNLL_3s\n";

}  // namespace

void write_metrics_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << kHeader;
  for (const SceneMetrics& r : rep.rows)
    write_row(out, std::to_string(r.scene_id), rep.variant, r);
  if (!out)
    throw std::runtime_error("write_metrics_csv: write failed on " + path);
}

void write_summary_csv(const std::string& path, const EvalReport& rep) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path);
  out << kHeader;
  write_row(out, "mean", rep.variant, rep.aggregate);
  if (!out)
    throw std::runtime_error("write_summary_csv: write failed on " + path);
}

void write_predictions_csv(const std::string& path, const model::Model& m,
                           const std::vector<data::SceneRecord>& scenes,
                           const EvalConfig& cfg,
                           const gauss::GaussianMixture* joint) {
  std::ofstream out(path);
  if (!out)
    throw std::runtime_error("write_predictions_csv: cannot open " + path);
  out << "scene_id,candidate,weight,t,x,y\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << ',' << buf;
  };
  for (const data::SceneRecord& rec : scenes) {
    model::PredictOpts po;
    po.mode = cfg.mode;
    po.n_samples = cfg.n_samples;
    po.n_outputs = cfg.n_outputs;
    po.cluster = cfg.cluster;
    po.seed = scene_seed(cfg.seed, rec.scene_id);
    const model::PredictResult pr =
        m.predict(data::context_of(rec), po, joint);
    for (size_t c = 0; c < pr.set.trajs.size(); ++c) {
      const Trajectory& traj = pr.set.trajs[c];
      for (Eigen::Index t = 0; t < traj.rows(); ++t) {
        out << rec.scene_id << ',' << c;
        put(pr.set.weights[static_cast<Eigen::Index>(c)]);
        out << ',' << t;
        put(traj(t, 0));
        put(traj(t, 1));
        out << '\n';
      }
    }
  }
  if (!out)
    throw std::runtime_error("write_predictions_csv: write failed on " + path);
}

}  // namespace cuae::metrics
