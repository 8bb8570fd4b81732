#include "cuae/model/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace cuae::model {

std::vector<EpochRow> train(
    TrainState& st, const std::vector<SceneContext>& xs,
    const std::vector<Trajectory>& ys,
    const std::function<void(const EpochRow&)>& on_epoch) {
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument(
        "train: need matching, nonempty scene and target lists");
  const TrainConfig& tc = st.tcfg;
  if (tc.batch_size < 1)
    throw std::invalid_argument("train: batch size must be >= 1");
  if (tc.epochs < st.epochs_done)
    throw std::invalid_argument("train: target epoch count " +
                                std::to_string(tc.epochs) +
                                " is below the completed " +
                                std::to_string(st.epochs_done));
  Model& m = st.model;
  const int n_scenes = static_cast<int>(xs.size());

  std::mt19937_64 rng;
  if (st.rng_state.empty()) {
    rng.seed(tc.seed);
  } else {
    std::istringstream is(st.rng_state);
    is >> rng;
    if (!is)
      throw std::runtime_error("train: corrupt stored RNG state");
  }

  std::vector<int> order(n_scenes);
  std::vector<EpochRow> log;

  for (int epoch = st.epochs_done; epoch < tc.epochs; ++epoch) {
    const double lr = nn::lr_schedule(epoch, tc.base_lr);
    // Each epoch permutes the identity, not the previous epoch's order, so a
    // resumed run shuffles exactly like an uninterrupted one.
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double tot = 0.0, rec = 0.0, kl = 0.0;
    long seen = 0;
    int batch_idx = 0;
    for (int start = 0; start < n_scenes;
         start += tc.batch_size, ++batch_idx) {
      const int B = std::min(tc.batch_size, n_scenes - start);
      // Batch statistics are undefined on a single scene; a trailing
      // singleton is dropped rather than normalized against itself.
      if (B == 1 && m.config().batchnorm) continue;
      std::vector<SceneContext> bx;
      std::vector<Trajectory> by;
      bx.reserve(B);
      by.reserve(B);
      for (int i = 0; i < B; ++i) {
        bx.push_back(xs[order[start + i]]);
        by.push_back(ys[order[start + i]]);
      }
      nn::Tape tape;
      const Model::Binds binds = m.lease(tape);
      const Model::Batch batch = m.make_batch(bx, by);
      const Model::LossNodes nodes =
          m.build_loss(tape, binds, batch, tc.n_samples, rng);
      const double v_tot = tape.value(nodes.total)(0, 0);
      const double v_rec = tape.value(nodes.rec)(0, 0);
      const double v_kl = tape.value(nodes.kl)(0, 0);
      if (!std::isfinite(v_tot))
        throw std::runtime_error("train: loss is not finite at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(batch_idx));
      tape.backward(nodes.total);
      st.adam.step(m.params(), m.gradients(tape, binds), lr);
      tot += v_tot * B;
      rec += v_rec * B;
      kl += v_kl * B;
      seen += B;
    }
    if (seen == 0)
      throw std::runtime_error(
          "train: every batch was skipped; grow the dataset or drop the "
          "batch size");
    const EpochRow row{epoch, lr, tot / seen, rec / seen, kl / seen};
    log.push_back(row);
    if (on_epoch) on_epoch(row);
    st.epochs_done = epoch + 1;
  }

  std::ostringstream os;
  os << rng;
  st.rng_state = os.str();
  return log;
}

void write_train_log(const std::string& path,
                     const std::vector<EpochRow>& rows, bool append) {
  std::ofstream f(path, append ? std::ios::app : std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!append) f << "epoch,lr,loss_total,loss_rec,loss_kl\n";
  char buf[160];
  for (const EpochRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                  r.lr, r.loss_total, r.loss_rec, r.loss_kl);
    f << buf;
  }
  if (!f) throw std::runtime_error("failed writing " + path);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& v) {
  throw std::invalid_argument(where + ": bad value '" + v + "'");
}

int to_int(const std::string& v, const std::string& where) {
  size_t used = 0;
  int r = 0;
  try {
    r = std::stoi(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) bad_value(where, v);
  return r;
}

double to_double(const std::string& v, const std::string& where) {
  size_t used = 0;
  double r = 0.0;
  try {
    r = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) bad_value(where, v);
  return r;
}

uint64_t to_u64(const std::string& v, const std::string& where) {
  size_t used = 0;
  uint64_t r = 0;
  try {
    r = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) bad_value(where, v);
  return r;
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  bad_value(where, v);
}

std::vector<int> to_int_list(const std::string& v, const std::string& where) {
  std::vector<int> out;
  size_t pos = 0;
  while (pos <= v.size()) {
    const size_t next = v.find(',', pos);
    out.push_back(to_int(
        trim(v.substr(pos, next == std::string::npos ? next : next - pos)),
        where));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

}  // namespace

void apply_config_file(const std::string& path, RunConfig& cfg) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "variant")
      cfg.variant = variant_from_name(val);
    else if (key == "history_len")
      cfg.model.history_len = to_int(val, where);
    else if (key == "horizon")
      cfg.model.horizon = to_int(val, where);
    else if (key == "n_features")
      cfg.model.n_features = to_int(val, where);
    else if (key == "latent_dim")
      cfg.model.latent_dim = to_int(val, where);
    else if (key == "components")
      cfg.model.n_components = to_int(val, where);
    else if (key == "hidden")
      cfg.model.hidden = to_int_list(val, where);
    else if (key == "weights_hidden")
      cfg.model.weights_hidden = to_int_list(val, where);
    else if (key == "batchnorm")
      cfg.model.batchnorm = to_bool(val, where);
    else if (key == "sigma")
      cfg.model.sigma = to_double(val, where);
    else if (key == "epochs")
      cfg.train.epochs = to_int(val, where);
    else if (key == "batch_size")
      cfg.train.batch_size = to_int(val, where);
    else if (key == "samples")
      cfg.train.n_samples = to_int(val, where);
    else if (key == "lr")
      cfg.train.base_lr = to_double(val, where);
    else if (key == "seed")
      cfg.train.seed = to_u64(val, where);
    else
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

}  // namespace cuae::model
