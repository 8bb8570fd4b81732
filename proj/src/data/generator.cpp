#include "cuae/data/generator.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace cuae::data {
namespace {

// Slot headings before jitter: straight on, left turn, right turn.
constexpr double kBaseHeading[kMaxBranches] = {0.0, M_PI / 2.0, -M_PI / 2.0};
constexpr double kStraightOmega = 1e-9;  // below this the arc is a line

void check_config(const GenConfig& cfg) {
  if (cfg.n_scenes < 0)
    throw std::invalid_argument("generate: n_scenes must be non-negative");
  if (cfg.n_branches < 1 || cfg.n_branches > kMaxBranches)
    throw std::invalid_argument("generate: n_branches must be 1, 2 or 3");
  if (cfg.branch_probs.size() != 0) {
    if (cfg.branch_probs.size() != cfg.n_branches)
      throw std::invalid_argument(
          "generate: branch_probs size does not match n_branches");
    if ((cfg.branch_probs.array() < 0.0).any() ||
        std::abs(cfg.branch_probs.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("generate: branch_probs is not a simplex");
  }
  if (!(cfg.speed_min > 0.0) || !(cfg.speed_max >= cfg.speed_min))
    throw std::invalid_argument("generate: bad speed range");
  if (cfg.noise_std < 0.0)
    throw std::invalid_argument("generate: noise_std must be non-negative");
  if (cfg.heading_jitter < 0.0)
    throw std::invalid_argument("generate: heading_jitter must be non-negative");
  if (cfg.history_len < 2)
    throw std::invalid_argument("generate: history_len must be at least 2");
  if (cfg.horizon < 1)
    throw std::invalid_argument("generate: horizon must be at least 1");
  if (!(cfg.val_frac >= 0.0) || !(cfg.val_frac < 1.0))
    throw std::invalid_argument("generate: val_frac must lie in [0, 1)");
}

// Point on the constant-curvature arc that turns by psi over the full
// horizon, t seconds after the origin crossing.
Eigen::Vector2d arc_point(double speed, double psi, double total_time,
                          double t) {
  const double omega = psi / total_time;
  if (std::abs(omega) < kStraightOmega) return {speed * t, 0.0};
  const double radius = speed / omega;
  return {radius * std::sin(omega * t), radius * (1.0 - std::cos(omega * t))};
}

}  // namespace

SceneContext context_of(const SceneRecord& r) {
  return SceneContext{r.history, r.branch_geometry};
}

namespace detail {

SceneRecord generate_scene(const GenConfig& cfg, int64_t scene_id) {
  std::mt19937_64 rng(cfg.seed ^ static_cast<uint64_t>(scene_id));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SceneRecord r;
  r.scene_id = scene_id;

  const double speed =
      cfg.speed_min + (cfg.speed_max - cfg.speed_min) * unit(rng);

  // Branch pick by CDF walk so the stream cost is one uniform regardless
  // of the outcome.
  const double u = unit(rng);
  double acc = 0.0;
  int slot = 0;
  for (; slot < cfg.n_branches - 1; ++slot) {
    acc += cfg.branch_probs.size() ? cfg.branch_probs[slot]
                                   : 1.0 / cfg.n_branches;
    if (u < acc) break;
  }
  r.mode_label = slot;

  r.branch_geometry = Eigen::VectorXd::Zero(2 * kMaxBranches);
  for (int s = 0; s < cfg.n_branches; ++s) {
    const double jitter = cfg.heading_jitter * (2.0 * unit(rng) - 1.0);
    r.branch_geometry[2 * s] = kBaseHeading[s] + jitter;
    r.branch_geometry[2 * s + 1] = 1.0;
  }

  const int H = cfg.history_len, T = cfg.horizon;
  r.history.resize(H, 2);
  for (int i = 0; i < H; ++i) {
    r.history(i, 0) = -speed * kDt * (H - 1 - i);
    r.history(i, 1) = 0.0;
  }

  const double psi = r.branch_geometry[2 * slot];
  const double total_time = T * kDt;
  r.future.resize(T, 2);
  for (int t = 0; t < T; ++t) {
    Eigen::Vector2d p = arc_point(speed, psi, total_time, (t + 1) * kDt);
    r.future(t, 0) = p.x() + cfg.noise_std * gauss(rng);
    r.future(t, 1) = p.y() + cfg.noise_std * gauss(rng);
  }
  return r;
}

Splits generate_serial(const GenConfig& cfg) {
  check_config(cfg);
  std::vector<SceneRecord> all(cfg.n_scenes);
  for (int i = 0; i < cfg.n_scenes; ++i) all[i] = generate_scene(cfg, i);

  const int n_val = static_cast<int>(std::lround(cfg.val_frac * cfg.n_scenes));
  const int n_train = cfg.n_scenes - n_val;
  Splits out;
  out.train.assign(all.begin(), all.begin() + n_train);
  out.val.assign(all.begin() + n_train, all.end());
  return out;
}

}  // namespace detail

Splits generate(const GenConfig& cfg) {
  check_config(cfg);
  std::vector<SceneRecord> all(cfg.n_scenes);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.n_scenes; ++i)
    all[i] = detail::generate_scene(cfg, i);

  const int n_val = static_cast<int>(std::lround(cfg.val_frac * cfg.n_scenes));
  const int n_train = cfg.n_scenes - n_val;
  Splits out;
  out.train.assign(all.begin(), all.begin() + n_train);
  out.val.assign(all.begin() + n_train, all.end());
  return out;
}

Eigen::Vector2d branch_endpoint(const SceneRecord& r, int slot) {
  if (slot < 0 || slot >= kMaxBranches)
    throw std::invalid_argument("branch_endpoint: slot out of range");
  if (r.branch_geometry[2 * slot + 1] == 0.0)
    throw std::invalid_argument("branch_endpoint: slot is unavailable");
  const int H = static_cast<int>(r.history.rows());
  if (H < 2) throw std::invalid_argument("branch_endpoint: history too short");
  const double speed =
      (r.history.row(H - 1) - r.history.row(H - 2)).norm() / kDt;
  const int T = static_cast<int>(r.future.rows());
  const double total_time = T * kDt;
  const Eigen::Vector2d last = r.history.row(H - 1).transpose();
  return last +
         arc_point(speed, r.branch_geometry[2 * slot], total_time, total_time);
}

void write_csv(const std::string& path,
               const std::vector<SceneRecord>& scenes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_csv: cannot open " + path);

  const int H = scenes.empty() ? 0 : static_cast<int>(scenes[0].history.rows());
  const int T = scenes.empty() ? 0 : static_cast<int>(scenes[0].future.rows());
  out << "scene_id";
  for (int i = 0; i < H; ++i) out << ",h" << i << "x,h" << i << "y";
  for (int t = 0; t < T; ++t) out << ",f" << t << "x,f" << t << "y";
  for (int s = 0; s < kMaxBranches; ++s) out << ",b" << s << "h,b" << s << "f";
  out << ",mode\n";

  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    out << ',' << buf;
  };
  for (const SceneRecord& r : scenes) {
    if (r.history.rows() != H || r.future.rows() != T)
      throw std::invalid_argument("write_csv: ragged scene shapes");
    out << r.scene_id;
    for (int i = 0; i < H; ++i) {
      put(r.history(i, 0));
      put(r.history(i, 1));
    }
    for (int t = 0; t < T; ++t) {
      put(r.future(t, 0));
      put(r.future(t, 1));
    }
    for (int k = 0; k < 2 * kMaxBranches; ++k) put(r.branch_geometry[k]);
    out << ',' << r.mode_label << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: write failed on " + path);
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void bad_row(const std::string& path, int line,
                          const std::string& what) {
  throw std::runtime_error("read_csv: " + path + ":" + std::to_string(line) +
                           ": " + what);
}

double to_double(const std::string& s, const std::string& path, int line) {
  size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    bad_row(path, line, "not a number: '" + s + "'");
  }
  if (pos != s.size()) bad_row(path, line, "trailing junk in '" + s + "'");
  return v;
}

}  // namespace

std::vector<SceneRecord> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) return {};  // empty file, empty list

  const std::vector<std::string> head = split_commas(line);
  const int n_cols = static_cast<int>(head.size());
  if (head.empty() || head[0] != "scene_id")
    bad_row(path, 1, "header must start with scene_id");
  if (head.back() != "mode") bad_row(path, 1, "header must end with mode");
  int fut_at = -1, geo_at = -1;
  for (int i = 1; i < n_cols; ++i) {
    if (head[i] == "f0x") fut_at = i;
    if (head[i] == "b0h") geo_at = i;
  }
  if (fut_at < 0 || geo_at < 0 || (fut_at - 1) % 2 || (geo_at - fut_at) % 2)
    bad_row(path, 1, "unrecognized column layout");
  const int H = (fut_at - 1) / 2;
  const int T = (geo_at - fut_at) / 2;
  if (H < 1 || T < 1 || n_cols != 1 + 2 * H + 2 * T + 2 * kMaxBranches + 1)
    bad_row(path, 1, "unrecognized column layout");

  std::vector<SceneRecord> scenes;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_commas(line);
    if (static_cast<int>(f.size()) != n_cols)
      bad_row(path, line_no,
              "expected " + std::to_string(n_cols) + " fields, got " +
                  std::to_string(f.size()));
    SceneRecord r;
    r.scene_id = static_cast<int64_t>(to_double(f[0], path, line_no));
    r.history.resize(H, 2);
    int k = 1;
    for (int i = 0; i < H; ++i) {
      r.history(i, 0) = to_double(f[k++], path, line_no);
      r.history(i, 1) = to_double(f[k++], path, line_no);
    }
    r.future.resize(T, 2);
    for (int t = 0; t < T; ++t) {
      r.future(t, 0) = to_double(f[k++], path, line_no);
      r.future(t, 1) = to_double(f[k++], path, line_no);
    }
    r.branch_geometry.resize(2 * kMaxBranches);
    for (int g = 0; g < 2 * kMaxBranches; ++g)
      r.branch_geometry[g] = to_double(f[k++], path, line_no);
    r.mode_label = static_cast<int>(to_double(f[k++], path, line_no));
    scenes.push_back(std::move(r));
  }
  return scenes;
}

}  // namespace cuae::data
