#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cuae/gauss/gaussian.hpp"
#include "cuae/nn/mlp.hpp"
#include "cuae/nn/tape.hpp"
#include "cuae/types.hpp"

namespace cuae::model {

/// The four trainable flavors: Gaussian vs mixture latent, random vs
/// unscented latent sampling.
enum class Variant { kCvae, kCuae, kGmmCvae, kGmmCuae };

inline bool is_gmm(Variant v) {
  return v == Variant::kGmmCvae || v == Variant::kGmmCuae;
}
inline bool is_unscented(Variant v) {
  return v == Variant::kCuae || v == Variant::kGmmCuae;
}
const char* variant_name(Variant v);
/// Accepts "cvae", "cuae", "gmm-cvae", "gmm-cuae"; throws
/// std::invalid_argument otherwise.
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  int history_len = 10;  // H
  int horizon = 30;      // T, at 0.1 s per step
  int n_features = 6;
  int latent_dim = 8;    // n
  int n_components = 3;  // C; forced to 1 for the non-mixture variants
  std::vector<int> hidden = {64, 64};
  std::vector<int> weights_hidden = {64};
  bool batchnorm = true;
  double sigma = 1.0;    // output-noise std in the reconstruction NLL

  int context_dim() const { return 2 * history_len + n_features; }
};

/// Latent heads evaluated on one scene. Non-mixture variants carry a single
/// component with weight 1.
struct LatentEncoding {
  std::vector<gauss::DiagGaussian> comps;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(comps.size()); }
};

enum class PredictMode { kPrior, kSigma, kCxp };

struct PredictOpts {
  PredictMode mode = PredictMode::kSigma;
  int n_samples = 17;  // K: latent draws (per component for mixture variants)
  int n_outputs = 0;   // M: candidate count; 0 derives it from the mode
  bool cluster = false;
  uint64_t seed = 0;
};

struct PredictResult {
  PredictionSet set;
  /// Mixture-variant decodes and component-aggregated conditional ex-post
  /// sets also come back in mixture form.
  std::optional<OutputGmm> gmm;
};

/// Encoder/prior/decoder assembly. Eval-path methods are const and safe to
/// call concurrently; the training path mutates batch-norm running
/// statistics and must stay single-threaded.
class Model {
 public:
  Model() = default;
  Model(Variant variant, ModelConfig cfg);

  void init_params(uint64_t seed);

  Variant variant() const { return variant_; }
  const ModelConfig& config() const { return cfg_; }

  /// [history rows scaled by 0.1, flattened x-block then y-block; features].
  Eigen::VectorXd context_vec(const SceneContext& x) const;

  LatentEncoding encode_posterior(const SceneContext& x,
                                  const Trajectory& y) const;
  LatentEncoding encode_prior(const SceneContext& x) const;
  /// Deterministic decode of one latent vector into a trajectory.
  Trajectory decode(const SceneContext& x, const Eigen::VectorXd& z) const;

  /// Inference for one scene. `joint` is the fitted joint encoding mixture,
  /// required for conditional ex-post mode. Mixture variants reject
  /// clustering and ex-post mode. With a full sigma set (K = 2n+1) the
  /// output is seed-independent, clustering included: its k-means seed is
  /// fixed, never taken from opts.
  PredictResult predict(const SceneContext& x, const PredictOpts& opts,
                        const gauss::GaussianMixture* joint = nullptr) const;

  // ---- training surface -------------------------------------------------
  struct Binds {
    nn::Mlp::Binding post, prior, dec, post_w, prior_w;
  };
  struct LossNodes {
    nn::NodeId total, rec, kl;
  };
  struct Batch {
    Eigen::MatrixXd ctx;       // context_dim x B
    Eigen::MatrixXd target;    // 2T x B, meters, x-block over y-block
    Eigen::MatrixXd last_pos;  // 2 x B, final history point per scene
  };

  Batch make_batch(const std::vector<SceneContext>& xs,
                   const std::vector<Trajectory>& ys) const;
  Binds lease(nn::Tape& tape) const;
  /// Build the per-batch loss graph: reconstruction + KL, already averaged
  /// over the batch. `rng` supplies latent draws (random variants) or axis
  /// subsets (unscented variants with K < 2n+1).
  LossNodes build_loss(nn::Tape& tape, const Binds& binds, const Batch& batch,
                       int n_samples, std::mt19937_64& rng);

  std::vector<nn::ParamRef> params();
  std::vector<nn::ParamRef> buffers();
  std::vector<Eigen::MatrixXd> gradients(const nn::Tape& tape,
                                         const Binds& binds) const;

 private:
  LatentEncoding split_heads(const Eigen::VectorXd& out,
                             const nn::Mlp& w_head) const;
  Trajectory decode_vec(const Eigen::VectorXd& ctx, const Eigen::VectorXd& z,
                        const Eigen::Vector2d& last) const;

  Variant variant_ = Variant::kCvae;
  ModelConfig cfg_;
  nn::Mlp post_, prior_, dec_;
  nn::Mlp post_w_, prior_w_;  // mixture weights heads, mixture variants only
};

}  // namespace cuae::model
