#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cuae/model/model.hpp"
#include "cuae/nn/optim.hpp"
#include "cuae/types.hpp"

namespace cuae::model {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  int n_samples = 16;  // latent draws per scene (per component for mixtures)
  double base_lr = 1e-3;
  uint64_t seed = 0;
};

/// Everything a run needs to continue exactly where it stopped.
struct TrainState {
  Model model;
  nn::Adam adam;
  TrainConfig tcfg;
  int epochs_done = 0;
  std::string rng_state;  // textual engine state; empty seeds fresh from tcfg
};

struct EpochRow {
  int epoch;  // 0-based
  double lr;
  double loss_total;
  double loss_rec;
  double loss_kl;
};

/// Run epochs [st.epochs_done, st.tcfg.epochs) over the given scenes.
/// Single-threaded and fully deterministic: a run checkpointed and resumed
/// produces the same parameters, optimizer state, and log rows as one that
/// never stopped. Throws std::runtime_error naming epoch and batch when the
/// loss stops being finite.
std::vector<EpochRow> train(
    TrainState& st, const std::vector<SceneContext>& xs,
    const std::vector<Trajectory>& ys,
    const std::function<void(const EpochRow&)>& on_epoch = {});

/// CSV rows epoch,lr,loss_total,loss_rec,loss_kl; the header is written only
/// when starting a fresh file.
void write_train_log(const std::string& path,
                     const std::vector<EpochRow>& rows, bool append);

struct RunConfig {
  Variant variant = Variant::kCuae;
  ModelConfig model;
  TrainConfig train;
};

/// Flat key=value file, one pair per line, '#' starts a comment. Keys:
/// variant, history_len, horizon, n_features, latent_dim, components,
/// hidden, weights_hidden, batchnorm, sigma, epochs, batch_size, samples,
/// lr, seed. Unknown keys and malformed values are errors naming the line.
void apply_config_file(const std::string& path, RunConfig& cfg);

}  // namespace cuae::model
