#include "cuae/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>

#include "cuae/expost/expost.hpp"
#include "cuae/postprocess/kmeans.hpp"
#include "cuae/unscented/sigma.hpp"

namespace cuae::model {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kCovReg = 1e-6;
// Positions enter the networks at a tenth scale so 30 m horizons sit in a
// unit-ish range.
constexpr double kPosScale = 0.1;
// Sigma-mode inference must not depend on the caller's seed, so its k-means
// seeding is pinned.
constexpr uint64_t kDetClusterSeed = 0x5161;

Eigen::VectorXd flatten_scaled(const Trajectory& y, double s) {
  Eigen::VectorXd v(2 * y.rows());
  v.head(y.rows()) = y.col(0) * s;
  v.tail(y.rows()) = y.col(1) * s;
  return v;
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kCvae:
      return "cvae";
    case Variant::kCuae:
      return "cuae";
    case Variant::kGmmCvae:
      return "gmm-cvae";
    case Variant::kGmmCuae:
      return "gmm-cuae";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "cvae") return Variant::kCvae;
  if (name == "cuae") return Variant::kCuae;
  if (name == "gmm-cvae") return Variant::kGmmCvae;
  if (name == "gmm-cuae") return Variant::kGmmCuae;
  throw std::invalid_argument(
      "unknown variant '" + name +
      "' (expected cvae, cuae, gmm-cvae, or gmm-cuae)");
}

Model::Model(Variant variant, ModelConfig cfg)
    : variant_(variant), cfg_(std::move(cfg)) {
  if (cfg_.history_len < 1 || cfg_.horizon < 1 || cfg_.latent_dim < 1 ||
      cfg_.n_features < 0)
    throw std::invalid_argument("Model: dimensions must be positive");
  if (!is_gmm(variant_)) cfg_.n_components = 1;
  if (cfg_.n_components < 1)
    throw std::invalid_argument("Model: component count must be >= 1");
  if (cfg_.sigma <= 0.0)
    throw std::invalid_argument("Model: sigma must be positive");

  const int ctx = cfg_.context_dim();
  const int n = cfg_.latent_dim;
  const int C = cfg_.n_components;
  const int T = cfg_.horizon;

  auto widths = [](int in, const std::vector<int>& hidden, int out) {
    std::vector<int> w;
    w.reserve(hidden.size() + 2);
    w.push_back(in);
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(out);
    return w;
  };
  post_ = nn::Mlp(widths(ctx + 2 * T, cfg_.hidden, 2 * n * C), cfg_.batchnorm);
  prior_ = nn::Mlp(widths(ctx, cfg_.hidden, 2 * n * C), cfg_.batchnorm);
  dec_ = nn::Mlp(widths(ctx + n, cfg_.hidden, 2 * T), cfg_.batchnorm);
  if (is_gmm(variant_)) {
    post_w_ = nn::Mlp(widths(2 * n * C, cfg_.weights_hidden, C), cfg_.batchnorm);
    prior_w_ = nn::Mlp(widths(2 * n * C, cfg_.weights_hidden, C), cfg_.batchnorm);
  }
}

void Model::init_params(uint64_t seed) {
  std::mt19937_64 rng(seed);
  post_.init_params(rng);
  prior_.init_params(rng);
  dec_.init_params(rng);
  if (is_gmm(variant_)) {
    post_w_.init_params(rng);
    prior_w_.init_params(rng);
  }
}

Eigen::VectorXd Model::context_vec(const SceneContext& x) const {
  const int H = cfg_.history_len;
  if (x.history.rows() != H)
    throw std::invalid_argument("context_vec: expected " + std::to_string(H) +
                                " history rows, got " +
                                std::to_string(x.history.rows()));
  if (x.features.size() != cfg_.n_features)
    throw std::invalid_argument("context_vec: expected " +
                                std::to_string(cfg_.n_features) +
                                " features, got " +
                                std::to_string(x.features.size()));
  Eigen::VectorXd v(cfg_.context_dim());
  v.head(H) = x.history.col(0) * kPosScale;
  v.segment(H, H) = x.history.col(1) * kPosScale;
  v.tail(cfg_.n_features) = x.features;
  return v;
}

LatentEncoding Model::split_heads(const Eigen::VectorXd& out,
                                  const nn::Mlp& w_head) const {
  const int n = cfg_.latent_dim;
  const int C = cfg_.n_components;
  LatentEncoding enc;
  enc.comps.reserve(C);
  for (int c = 0; c < C; ++c)
    enc.comps.emplace_back(out.segment(2 * n * c, n),
                           out.segment(2 * n * c + n, n));
  if (!is_gmm(variant_)) {
    enc.weights = Eigen::VectorXd::Ones(1);
    return enc;
  }
  Eigen::VectorXd w_in(2 * n * C);
  for (int c = 0; c < C; ++c) w_in.segment(n * c, n) = enc.comps[c].mean;
  for (int c = 0; c < C; ++c)
    w_in.segment(n * C + n * c, n) = enc.comps[c].variance();
  Eigen::ArrayXd logits = w_head.eval(w_in).col(0).array();
  logits -= logits.maxCoeff();
  const Eigen::ArrayXd e = logits.exp();
  enc.weights = (e / e.sum()).matrix();
  return enc;
}

LatentEncoding Model::encode_posterior(const SceneContext& x,
                                       const Trajectory& y) const {
  if (y.rows() != cfg_.horizon)
    throw std::invalid_argument("encode_posterior: expected " +
                                std::to_string(cfg_.horizon) +
                                " trajectory rows, got " +
                                std::to_string(y.rows()));
  Eigen::VectorXd in(cfg_.context_dim() + 2 * cfg_.horizon);
  in.head(cfg_.context_dim()) = context_vec(x);
  in.tail(2 * cfg_.horizon) = flatten_scaled(y, kPosScale);
  return split_heads(post_.eval(in).col(0), post_w_);
}

LatentEncoding Model::encode_prior(const SceneContext& x) const {
  return split_heads(prior_.eval(context_vec(x)).col(0), prior_w_);
}

Trajectory Model::decode_vec(const Eigen::VectorXd& ctx,
                             const Eigen::VectorXd& z,
                             const Eigen::Vector2d& last) const {
  Eigen::VectorXd in(ctx.size() + z.size());
  in << ctx, z;
  const Eigen::VectorXd out = dec_.eval(in).col(0);
  const int T = cfg_.horizon;
  Trajectory traj(T, 2);
  double px = last.x();
  double py = last.y();
  for (int t = 0; t < T; ++t) {
    px += out[t];
    py += out[T + t];
    traj(t, 0) = px;
    traj(t, 1) = py;
  }
  return traj;
}

Trajectory Model::decode(const SceneContext& x,
                         const Eigen::VectorXd& z) const {
  if (z.size() != cfg_.latent_dim)
    throw std::invalid_argument("decode: expected a " +
                                std::to_string(cfg_.latent_dim) +
                                "-dim latent, got " +
                                std::to_string(z.size()));
  return decode_vec(context_vec(x), z,
                    x.history.row(x.history.rows() - 1).transpose());
}

Model::Batch Model::make_batch(const std::vector<SceneContext>& xs,
                               const std::vector<Trajectory>& ys) const {
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument(
        "make_batch: need matching, nonempty scene and target lists");
  const int B = static_cast<int>(xs.size());
  const int T = cfg_.horizon;
  Batch b;
  b.ctx.resize(cfg_.context_dim(), B);
  b.target.resize(2 * T, B);
  b.last_pos.resize(2, B);
  for (int i = 0; i < B; ++i) {
    b.ctx.col(i) = context_vec(xs[i]);
    if (ys[i].rows() != T)
      throw std::invalid_argument("make_batch: trajectory length mismatch");
    b.target.col(i).head(T) = ys[i].col(0);
    b.target.col(i).tail(T) = ys[i].col(1);
    b.last_pos(0, i) = xs[i].history(cfg_.history_len - 1, 0);
    b.last_pos(1, i) = xs[i].history(cfg_.history_len - 1, 1);
  }
  return b;
}

Model::Binds Model::lease(nn::Tape& tape) const {
  Binds b;
  b.post = post_.lease(tape);
  b.prior = prior_.lease(tape);
  b.dec = dec_.lease(tape);
  if (is_gmm(variant_)) {
    b.post_w = post_w_.lease(tape);
    b.prior_w = prior_w_.lease(tape);
  }
  return b;
}

std::vector<nn::ParamRef> Model::params() {
  std::vector<nn::ParamRef> out;
  post_.collect_params("post", out);
  prior_.collect_params("prior", out);
  dec_.collect_params("dec", out);
  if (is_gmm(variant_)) {
    post_w_.collect_params("post_w", out);
    prior_w_.collect_params("prior_w", out);
  }
  return out;
}

std::vector<nn::ParamRef> Model::buffers() {
  std::vector<nn::ParamRef> out;
  post_.collect_buffers("post", out);
  prior_.collect_buffers("prior", out);
  dec_.collect_buffers("dec", out);
  if (is_gmm(variant_)) {
    post_w_.collect_buffers("post_w", out);
    prior_w_.collect_buffers("prior_w", out);
  }
  return out;
}

std::vector<Eigen::MatrixXd> Model::gradients(const nn::Tape& tape,
                                              const Binds& binds) const {
  std::vector<Eigen::MatrixXd> g;
  auto append = [&](const nn::Mlp& m, const nn::Mlp::Binding& b) {
    std::vector<Eigen::MatrixXd> part = m.gradients(tape, b);
    g.insert(g.end(), std::make_move_iterator(part.begin()),
             std::make_move_iterator(part.end()));
  };
  append(post_, binds.post);
  append(prior_, binds.prior);
  append(dec_, binds.dec);
  if (is_gmm(variant_)) {
    append(post_w_, binds.post_w);
    append(prior_w_, binds.prior_w);
  }
  return g;
}

Model::LossNodes Model::build_loss(nn::Tape& tape, const Binds& binds,
                                   const Batch& batch, int n_samples,
                                   std::mt19937_64& rng) {
  const int B = static_cast<int>(batch.ctx.cols());
  const int n = cfg_.latent_dim;
  const int C = cfg_.n_components;
  const int T = cfg_.horizon;
  const int K = n_samples;
  const double sigma = cfg_.sigma;

  if (batch.ctx.rows() != cfg_.context_dim() || batch.target.rows() != 2 * T ||
      batch.target.cols() != B || batch.last_pos.cols() != B)
    throw std::invalid_argument("build_loss: batch shape mismatch");
  if (K < 1)
    throw std::invalid_argument("build_loss: need at least one latent sample");
  if (is_unscented(variant_) && (K % 2 == 0 || K < 3 || K > 2 * n + 1))
    throw std::invalid_argument(
        "build_loss: sigma-point count must be odd and within [3, 2n+1]");

  using nn::NodeId;
  const NodeId ctx = tape.leaf(batch.ctx);
  const NodeId y_t = tape.leaf(batch.target);

  const NodeId post_in =
      tape.vcat(ctx, tape.leaf(Eigen::MatrixXd(batch.target * kPosScale)));
  const NodeId post_out = post_.forward(tape, binds.post, post_in, true);
  const NodeId prior_out = prior_.forward(tape, binds.prior, ctx, true);

  std::vector<NodeId> mu_p(C), lv_p(C), mu_g(C), lv_g(C);
  for (int c = 0; c < C; ++c) {
    mu_p[c] = tape.rows(post_out, 2 * n * c, n);
    lv_p[c] = tape.rows(post_out, 2 * n * c + n, n);
    mu_g[c] = tape.rows(prior_out, 2 * n * c, n);
    lv_g[c] = tape.rows(prior_out, 2 * n * c + n, n);
  }

  NodeId w_phi = -1;
  NodeId w_gamma = -1;
  if (is_gmm(variant_)) {
    auto head_weights = [&](nn::Mlp& head, const nn::Mlp::Binding& hb,
                            const std::vector<NodeId>& mu,
                            const std::vector<NodeId>& lv) {
      NodeId mus = mu[0];
      for (int c = 1; c < C; ++c) mus = tape.vcat(mus, mu[c]);
      NodeId vars = tape.exp(lv[0]);
      for (int c = 1; c < C; ++c) vars = tape.vcat(vars, tape.exp(lv[c]));
      const NodeId logits =
          head.forward(tape, hb, tape.vcat(mus, vars), true);
      return tape.softmax_cols(logits);
    };
    w_phi = head_weights(post_w_, binds.post_w, mu_p, lv_p);
    w_gamma = head_weights(prior_w_, binds.prior_w, mu_g, lv_g);
  }

  // Latent draws from the posterior, decoded to absolute positions. Columns
  // of each decoded block: K consecutive samples per scene.
  const NodeId ctx_rep = tape.repeat_cols(ctx, K);
  Eigen::MatrixXd lastx(1, B * K), lasty(1, B * K);
  for (int b = 0; b < B; ++b)
    for (int k = 0; k < K; ++k) {
      lastx(0, b * K + k) = batch.last_pos(0, b);
      lasty(0, b * K + k) = batch.last_pos(1, b);
    }
  const NodeId lastx_leaf = tape.leaf(lastx);
  const NodeId lasty_leaf = tape.leaf(lasty);

  std::normal_distribution<double> normal(0.0, 1.0);
  // All K*C draws go through one decoder pass: normalization layers then see
  // every component's samples as a single population — the same one the
  // running statistics describe to eval-mode decodes — and between-component
  // offsets survive the batch centering.
  NodeId z_all = -1;
  for (int c = 0; c < C; ++c) {
    NodeId z;
    if (is_unscented(variant_)) {
      std::vector<std::vector<int>> axes(B);
      if (K == 2 * n + 1) {
        std::vector<int> all(n);
        std::iota(all.begin(), all.end(), 0);
        for (auto& a : axes) a = all;
      } else {
        for (int b = 0; b < B; ++b)
          axes[b] = unscented::subsample_axes(n, K, rng);
      }
      z = tape.sigma_expand(mu_p[c], lv_p[c], axes);
    } else {
      Eigen::MatrixXd eps(n, B * K);
      for (int col = 0; col < B * K; ++col)
        for (int r = 0; r < n; ++r) eps(r, col) = normal(rng);
      z = nn::reparam_sample(tape, tape.repeat_cols(mu_p[c], K),
                             tape.repeat_cols(lv_p[c], K), tape.leaf(eps));
    }
    z_all = (c == 0) ? z : tape.hcat(z_all, z);
  }
  NodeId ctx_all = ctx_rep;
  for (int c = 1; c < C; ++c) ctx_all = tape.hcat(ctx_all, ctx_rep);
  const NodeId dec_all =
      dec_.forward(tape, binds.dec, tape.vcat(ctx_all, z_all), true);
  std::vector<NodeId> decoded(C);
  for (int c = 0; c < C; ++c) {
    const NodeId dec_out = tape.cols(dec_all, c * B * K, B * K);
    const NodeId px = tape.add_rowvec(
        tape.cumsum_down(tape.rows(dec_out, 0, T)), lastx_leaf);
    const NodeId py = tape.add_rowvec(
        tape.cumsum_down(tape.rows(dec_out, T, T)), lasty_leaf);
    decoded[c] = tape.vcat(px, py);
  }

  const double iso_norm = T * kLog2Pi + 2.0 * T * std::log(sigma);
  NodeId rec;
  if (variant_ == Variant::kCvae) {
    const NodeId resid = tape.sub(decoded[0], tape.repeat_cols(y_t, K));
    rec = tape.add_scalar(
        tape.scale(tape.sum_all(tape.mul(resid, resid)),
                   1.0 / (2.0 * sigma * sigma * B * K)),
        iso_norm);
  } else if (variant_ == Variant::kCuae) {
    const NodeId resid = tape.sub(tape.group_mean_cols(decoded[0], K), y_t);
    rec = tape.add_scalar(tape.scale(tape.sum_all(tape.mul(resid, resid)),
                                     1.0 / (2.0 * sigma * sigma * B)),
                          iso_norm);
  } else {
    // Output mixture: per-component centroid and per-timestep 2x2 scatter of
    // the K decodes; the scene's winner component (closest centroid) pays the
    // NLL and its posterior weight is pushed up.
    const NodeId ytx = tape.rows(y_t, 0, T);
    const NodeId yty = tape.rows(y_t, T, T);
    std::vector<NodeId> cent(C);
    NodeId nll_all = -1;
    for (int c = 0; c < C; ++c) {
      cent[c] = tape.group_mean_cols(decoded[c], K);
      const NodeId cx = tape.rows(cent[c], 0, T);
      const NodeId cy = tape.rows(cent[c], T, T);
      const NodeId dxs =
          tape.sub(tape.rows(decoded[c], 0, T), tape.repeat_cols(cx, K));
      const NodeId dys =
          tape.sub(tape.rows(decoded[c], T, T), tape.repeat_cols(cy, K));
      const NodeId a =
          tape.add_scalar(tape.group_mean_cols(tape.mul(dxs, dxs), K), kCovReg);
      const NodeId bc = tape.group_mean_cols(tape.mul(dxs, dys), K);
      const NodeId d =
          tape.add_scalar(tape.group_mean_cols(tape.mul(dys, dys), K), kCovReg);
      const NodeId rx = tape.sub(ytx, cx);
      const NodeId ry = tape.sub(yty, cy);
      const NodeId det = tape.sub(tape.mul(a, d), tape.mul(bc, bc));
      const NodeId quad = tape.div(
          tape.add(tape.sub(tape.mul(d, tape.mul(rx, rx)),
                            tape.scale(tape.mul(bc, tape.mul(rx, ry)), 2.0)),
                   tape.mul(a, tape.mul(ry, ry))),
          det);
      const NodeId comp_nll =
          tape.colwise_sum(tape.scale(tape.add(tape.log(det), quad), 0.5));
      nll_all = (c == 0) ? comp_nll : tape.vcat(nll_all, comp_nll);
    }

    std::vector<int> win(B, 0);
    for (int b = 0; b < B; ++b) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < C; ++c) {
        const Eigen::MatrixXd& cv = tape.value(cent[c]);
        double ade = 0.0;
        for (int t = 0; t < T; ++t) {
          const double dx = cv(t, b) - batch.target(t, b);
          const double dy = cv(T + t, b) - batch.target(T + t, b);
          ade += std::sqrt(dx * dx + dy * dy);
        }
        if (ade < best) {
          best = ade;
          win[b] = c;
        }
      }
    }
    const NodeId win_nll = tape.select_row_per_col(nll_all, win);
    const NodeId w_win = tape.select_row_per_col(w_phi, win);
    rec = tape.add_scalar(
        tape.scale(tape.sub(tape.sum_all(win_nll),
                            tape.sum_all(tape.log(w_win))),
                   1.0 / B),
        T * kLog2Pi);
  }

  auto kl_inner = [&](int c) {
    const NodeId diff = tape.sub(mu_p[c], mu_g[c]);
    const NodeId ratio =
        tape.mul(tape.add(tape.exp(lv_p[c]), tape.mul(diff, diff)),
                 tape.exp(tape.scale(lv_g[c], -1.0)));
    return tape.add(tape.sub(lv_g[c], lv_p[c]), ratio);
  };
  NodeId kl;
  if (!is_gmm(variant_)) {
    kl = tape.add_scalar(tape.scale(tape.sum_all(kl_inner(0)), 1.0 / (2.0 * B)),
                         -0.5 * n);
  } else {
    NodeId inner = kl_inner(0);
    for (int c = 1; c < C; ++c) inner = tape.add(inner, kl_inner(c));
    const NodeId gauss_part = tape.add_scalar(
        tape.scale(tape.sum_all(inner), 1.0 / (2.0 * B)), -0.5 * n * C);
    const NodeId disc = tape.scale(
        tape.sum_all(tape.mul(
            w_phi, tape.sub(tape.log(w_phi), tape.log(w_gamma)))),
        1.0 / B);
    kl = tape.add(gauss_part, disc);
  }

  const NodeId total = tape.add(rec, kl);
  return {total, rec, kl};
}

namespace {

// Mean trajectory and biased per-timestep 2x2 scatter (+ diagonal floor).
std::pair<Trajectory, std::vector<Eigen::Matrix2d>> sample_stats(
    const std::vector<Trajectory>& trajs) {
  const int S = static_cast<int>(trajs.size());
  const int T = static_cast<int>(trajs.front().rows());
  Trajectory mean = Trajectory::Zero(T, 2);
  for (const Trajectory& t : trajs) mean += t;
  mean /= static_cast<double>(S);
  std::vector<Eigen::Matrix2d> covs(T, Eigen::Matrix2d::Zero());
  for (const Trajectory& tr : trajs)
    for (int t = 0; t < T; ++t) {
      const Eigen::Vector2d d = (tr.row(t) - mean.row(t)).transpose();
      covs[t] += d * d.transpose();
    }
  for (Eigen::Matrix2d& c : covs)
    c = c / static_cast<double>(S) + kCovReg * Eigen::Matrix2d::Identity();
  return {std::move(mean), std::move(covs)};
}

}  // namespace

PredictResult Model::predict(const SceneContext& x, const PredictOpts& opts,
                             const gauss::GaussianMixture* joint) const {
  const int n = cfg_.latent_dim;
  const int C = cfg_.n_components;
  const int K = opts.n_samples;
  const bool sigma_mode = opts.mode == PredictMode::kSigma;

  if (K < 1) throw std::invalid_argument("predict: need at least one sample");
  if (sigma_mode && (K % 2 == 0 || K < 3 || K > 2 * n + 1))
    throw std::invalid_argument(
        "predict: sigma-point count must be odd and within [3, 2n+1]");

  const Eigen::VectorXd ctx = context_vec(x);
  const Eigen::Vector2d last =
      x.history.row(cfg_.history_len - 1).transpose();
  const LatentEncoding prior = encode_prior(x);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto draw_random = [&](const gauss::DiagGaussian& g) {
    const Eigen::VectorXd sd = (0.5 * g.log_var.array()).exp().matrix();
    Eigen::MatrixXd z(n, K);
    for (int k = 0; k < K; ++k)
      for (int j = 0; j < n; ++j) z(j, k) = g.mean[j] + sd[j] * normal(rng);
    return z;
  };
  auto draw_sigma = [&](const gauss::DiagGaussian& g) {
    Eigen::MatrixXd pts = unscented::sigma_points(g);
    if (K == 2 * n + 1) return pts;
    return unscented::subsample_points(pts,
                                       unscented::subsample_axes(n, K, rng));
  };
  auto decode_cols = [&](const Eigen::MatrixXd& z) {
    std::vector<Trajectory> out(z.cols());
    for (int k = 0; k < z.cols(); ++k) out[k] = decode_vec(ctx, z.col(k), last);
    return out;
  };

  if (is_gmm(variant_)) {
    if (opts.mode == PredictMode::kCxp)
      throw std::invalid_argument(
          "predict: ex-post conditioning applies to the single-Gaussian "
          "variants only");
    if (opts.cluster)
      throw std::invalid_argument(
          "predict: clustering applies to the single-Gaussian variants only");
    if (opts.n_outputs != 0 && opts.n_outputs != C)
      throw std::invalid_argument(
          "predict: mixture variants emit one candidate per component (M = " +
          std::to_string(C) + ")");
    OutputGmm gmm;
    gmm.weights = prior.weights;
    gmm.centroids.reserve(C);
    gmm.step_covs.reserve(C);
    std::vector<int> counts;
    for (int c = 0; c < C; ++c) {
      const Eigen::MatrixXd z =
          sigma_mode ? draw_sigma(prior.comps[c]) : draw_random(prior.comps[c]);
      auto [mean, covs] = sample_stats(decode_cols(z));
      gmm.centroids.push_back(std::move(mean));
      gmm.step_covs.push_back(std::move(covs));
      counts.push_back(static_cast<int>(z.cols()));
    }
    PredictionSet set;
    set.trajs = gmm.centroids;
    set.weights = gmm.weights;
    set.step_covs = gmm.step_covs;
    set.counts = std::move(counts);
    return {std::move(set), std::move(gmm)};
  }

  // Single-Gaussian latent: draw, decode, then cluster or pass through.
  const gauss::DiagGaussian& pg = prior.comps[0];
  std::vector<Trajectory> trajs;
  Eigen::VectorXd weights;
  expost::CxpSamples cxp;
  const bool cxp_mode = opts.mode == PredictMode::kCxp;
  if (cxp_mode) {
    if (joint == nullptr)
      throw std::invalid_argument(
          "predict: conditional ex-post mode needs the fitted joint mixture");
    const Eigen::VectorXd z2 = expost::select_conditioning_sigma(*joint, pg);
    cxp = expost::cxp_sample(*joint, z2, K, opts.seed,
                             is_unscented(variant_) ? expost::CxpMode::kUnscented
                                                    : expost::CxpMode::kRandom);
    trajs = decode_cols(cxp.samples);
    weights = cxp.weights;
  } else {
    const Eigen::MatrixXd z = sigma_mode ? draw_sigma(pg) : draw_random(pg);
    trajs = decode_cols(z);
    weights = Eigen::VectorXd::Constant(
        z.cols(), 1.0 / static_cast<double>(z.cols()));
  }

  const int S = static_cast<int>(trajs.size());
  const bool deterministic =
      sigma_mode || (cxp_mode && is_unscented(variant_));
  if (opts.cluster) {
    const int M = opts.n_outputs;
    if (M < 1)
      throw std::invalid_argument(
          "predict: clustering needs an explicit candidate count");
    if (S < M)
      throw std::invalid_argument("predict: cannot cluster " +
                                  std::to_string(S) + " trajectories into " +
                                  std::to_string(M));
    PredictionSet set = post::cluster_trajectories(
        trajs, M, deterministic ? kDetClusterSeed : opts.seed);
    return {std::move(set), std::nullopt};
  }

  if (cxp_mode && is_unscented(variant_)) {
    // Group the sigma trajectories by conditional component: the output is a
    // mixture with the surviving components' weights and decoded moments.
    if (opts.n_outputs != 0)
      throw std::invalid_argument(
          "predict: the candidate count in unscented ex-post mode is set by "
          "component pruning");
    std::vector<int> order;       // first-appearance order of labels
    std::vector<int> group_of(S);
    for (int i = 0; i < S; ++i) {
      const int label = cxp.component[i];
      auto it = std::find(order.begin(), order.end(), label);
      if (it == order.end()) {
        order.push_back(label);
        group_of[i] = static_cast<int>(order.size()) - 1;
      } else {
        group_of[i] = static_cast<int>(it - order.begin());
      }
    }
    const int G = static_cast<int>(order.size());
    OutputGmm gmm;
    gmm.weights = Eigen::VectorXd::Zero(G);
    std::vector<std::vector<Trajectory>> members(G);
    for (int i = 0; i < S; ++i) {
      members[group_of[i]].push_back(trajs[i]);
      gmm.weights[group_of[i]] += weights[i];
    }
    std::vector<int> counts(G);
    for (int g = 0; g < G; ++g) {
      auto [mean, covs] = sample_stats(members[g]);
      gmm.centroids.push_back(std::move(mean));
      gmm.step_covs.push_back(std::move(covs));
      counts[g] = static_cast<int>(members[g].size());
    }
    PredictionSet set;
    set.trajs = gmm.centroids;
    set.weights = gmm.weights;
    set.step_covs = gmm.step_covs;
    set.counts = std::move(counts);
    return {std::move(set), std::move(gmm)};
  }

  const int M = opts.n_outputs == 0 ? S : opts.n_outputs;
  if (M != S)
    throw std::invalid_argument(
        "predict: without clustering the candidate count must equal the "
        "sample count (" +
        std::to_string(S) + ")");
  PredictionSet set;
  set.trajs = std::move(trajs);
  set.weights = std::move(weights);
  return {std::move(set), std::nullopt};
}

}  // namespace cuae::model
