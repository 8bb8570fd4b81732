#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "cuae/gauss/gaussian.hpp"
#include "cuae/model/checkpoint.hpp"
#include "cuae/model/losses.hpp"
#include "cuae/model/model.hpp"
#include "cuae/model/train.hpp"
#include "cuae/unscented/sigma.hpp"

using namespace cuae;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Trajectory traj1(double x, double y) {
  Trajectory t(1, 2);
  t << x, y;
  return t;
}

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.history_len = 4;
  cfg.horizon = 5;
  cfg.n_features = 2;
  cfg.latent_dim = 2;
  cfg.n_components = 2;
  cfg.hidden = {8};
  cfg.weights_hidden = {4};
  cfg.batchnorm = true;
  return cfg;
}

// Hand-rolled scenes shaped for tiny_config.
void tiny_scenes(int n, uint64_t seed, std::vector<SceneContext>& xs,
                 std::vector<Trajectory>& ys) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  xs.clear();
  ys.clear();
  for (int i = 0; i < n; ++i) {
    SceneContext x;
    x.history = Eigen::MatrixX2d::NullaryExpr(
        4, 2, [&](int, int) { return normal(rng); });
    x.features = VectorXd::NullaryExpr(2, [&](int) { return normal(rng); });
    xs.push_back(std::move(x));
    ys.push_back(Trajectory::NullaryExpr(
        5, 2, [&](int, int) { return 2.0 * normal(rng); }));
  }
}

bool params_identical(model::Model& a, model::Model& b) {
  auto pa = a.params(), pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name) return false;
    if (pa[i].tensor->rows() != pb[i].tensor->rows() ||
        pa[i].tensor->cols() != pb[i].tensor->cols())
      return false;
    if ((*pa[i].tensor - *pb[i].tensor).cwiseAbs().maxCoeff() != 0.0)
      return false;
  }
  auto ba = a.buffers(), bb = b.buffers();
  for (size_t i = 0; i < ba.size(); ++i)
    if ((*ba[i].tensor - *bb[i].tensor).cwiseAbs().maxCoeff() != 0.0)
      return false;
  return true;
}

OutputGmm single_step_gmm(std::vector<Trajectory> centroids, double var) {
  OutputGmm out;
  out.weights = VectorXd::Constant(centroids.size(),
                                   1.0 / static_cast<double>(centroids.size()));
  for (auto& c : centroids) {
    out.step_covs.push_back(
        std::vector<Eigen::Matrix2d>(c.rows(),
                                     var * Eigen::Matrix2d::Identity()));
    out.centroids.push_back(std::move(c));
  }
  return out;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("sample reconstruction hits its floor on an exact decode") {
  CHECK(model::loss_rec_samples({traj1(0.0, 0.0)}, traj1(0.0, 0.0), 1.0) ==
        doctest::Approx(1.8378771).epsilon(1e-7));
}

TEST_CASE("sample reconstruction grows quadratically in the residual") {
  double base = model::loss_rec_samples({traj1(0, 0)}, traj1(0, 0), 1.0);
  CHECK(model::loss_rec_samples({traj1(1, 0)}, traj1(0, 0), 1.0) ==
        doctest::Approx(base + 0.5).epsilon(1e-12));
  CHECK(model::loss_rec_samples({traj1(2, 0)}, traj1(0, 0), 1.0) ==
        doctest::Approx(base + 2.0).epsilon(1e-12));
  CHECK(model::loss_rec_samples({traj1(1, 1)}, traj1(0, 0), 1.0) ==
        doctest::Approx(base + 1.0).epsilon(1e-12));
}

TEST_CASE("sigma is a standard deviation, not a variance") {
  // Exact hit, T=1: the loss is log(2 pi sigma^2), so sigma=2 adds 2 log 2.
  double at1 = model::loss_rec_samples({traj1(0, 0)}, traj1(0, 0), 1.0);
  double at2 = model::loss_rec_samples({traj1(0, 0)}, traj1(0, 0), 2.0);
  CHECK(at2 - at1 == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  // And a residual of 1 m is worth 1/(2 sigma^2).
  double r2 = model::loss_rec_samples({traj1(1, 0)}, traj1(0, 0), 2.0);
  CHECK(r2 - at2 == doctest::Approx(0.125).epsilon(1e-12));
}

TEST_CASE("multi-sample reconstruction averages the per-sample losses") {
  Trajectory y = traj1(0.0, 0.0);
  double la = model::loss_rec_samples({traj1(1, 0)}, y, 1.0);
  double lb = model::loss_rec_samples({traj1(0, 3)}, y, 1.0);
  CHECK(model::loss_rec_samples({traj1(1, 0), traj1(0, 3)}, y, 1.0) ==
        doctest::Approx(0.5 * (la + lb)).epsilon(1e-12));
}

TEST_CASE("distribution reconstruction scores only the decoded mean") {
  Trajectory y = traj1(0.5, -0.5);
  CHECK(model::loss_rec_dist({y}, y, 1.0) ==
        doctest::Approx(1.8378771).epsilon(1e-7));
  // A symmetric pair has the target as its mean: still the floor.
  CHECK(model::loss_rec_dist({traj1(1.5, -0.5), traj1(-0.5, -0.5)}, y, 1.0) ==
        doctest::Approx(1.8378771).epsilon(1e-7));
  // One decode: identical to the per-sample loss.
  Trajectory off = traj1(1.0, 0.25);
  CHECK(model::loss_rec_dist({off}, y, 1.0) ==
        doctest::Approx(model::loss_rec_samples({off}, y, 1.0))
            .epsilon(1e-12));
}

TEST_CASE("mixture KL vanishes on identical encodings") {
  model::LatentEncoding enc;
  enc.comps.push_back(gauss::DiagGaussian::standard(3));
  enc.comps.push_back(
      gauss::DiagGaussian(VectorXd::Constant(3, 1.0), VectorXd::Zero(3)));
  enc.weights = Eigen::Vector2d(0.25, 0.75);
  CHECK(model::loss_kl_gmm(enc, enc) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("mixture KL charges log 2 for a one-hot against a uniform") {
  model::LatentEncoding post, prior;
  for (int c = 0; c < 2; ++c) {
    post.comps.push_back(gauss::DiagGaussian::standard(2));
    prior.comps.push_back(gauss::DiagGaussian::standard(2));
  }
  post.weights = Eigen::Vector2d(1.0, 0.0);
  prior.weights = Eigen::Vector2d(0.5, 0.5);
  CHECK(model::loss_kl_gmm(post, prior) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mixture KL with one component is the diagonal KL") {
  model::LatentEncoding post, prior;
  post.comps.push_back(
      gauss::DiagGaussian(VectorXd::Constant(2, 1.0), VectorXd::Zero(2)));
  prior.comps.push_back(gauss::DiagGaussian::standard(2));
  post.weights = VectorXd::Constant(1, 1.0);
  prior.weights = VectorXd::Constant(1, 1.0);
  CHECK(model::loss_kl_gmm(post, prior) ==
        doctest::Approx(gauss::kl_diag(post.comps[0], prior.comps[0]))
            .epsilon(1e-15));
}

TEST_CASE("the winner is the centroid closest on average, ties to the first") {
  Trajectory y(2, 2);
  y << 0, 0, 1, 0;
  Trajectory near = y;
  Trajectory far(2, 2);
  far << 5, 5, 6, 5;
  CHECK(model::gmm_winner({far, near}, y) == 1);
  CHECK(model::gmm_winner({near, far}, y) == 0);
  CHECK(model::gmm_winner({far, far}, y) == 0);  // tie -> lowest index
}

TEST_CASE("winner reconstruction floor and the weight surcharge") {
  Trajectory y = traj1(0.0, 0.0);
  OutputGmm out = single_step_gmm({traj1(0, 0), traj1(9, 9)}, 1.0);
  // One-hot on the winner: pure NLL floor.
  CHECK(model::loss_rec_gmm(out, y, gauss::DiscreteDist(Eigen::Vector2d(
                                        1.0, 0.0))) ==
        doctest::Approx(1.8378771).epsilon(1e-7));
  // Uniform weights add -log(1/2).
  CHECK(model::loss_rec_gmm(out, y, gauss::DiscreteDist(Eigen::Vector2d(
                                        0.5, 0.5))) ==
        doctest::Approx(1.8378771 + std::log(2.0)).epsilon(1e-7));
  // No mass on the winner is an error, not infinity.
  CHECK_THROWS(model::loss_rec_gmm(
      out, y, gauss::DiscreteDist(Eigen::Vector2d(0.0, 1.0))));
}

TEST_CASE("equidistant centroids resolve to the first and stay finite") {
  Trajectory y = traj1(0.0, 0.0);
  OutputGmm out = single_step_gmm({traj1(1, 0), traj1(-1, 0)}, 1.0);
  double loss = model::loss_rec_gmm(
      out, y, gauss::DiscreteDist(Eigen::Vector2d(0.5, 0.5)));
  CHECK(std::isfinite(loss));
  // Matches scoring component 0 by hand.
  CHECK(loss == doctest::Approx(kLog2Pi + 0.5 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("an overconfident winner is penalized for a fixed residual") {
  Trajectory y = traj1(0.0, 0.0);
  double prev = -1e300;
  for (double var : {0.5, 0.1, 0.01}) {
    OutputGmm out = single_step_gmm({traj1(1, 0)}, var);
    double loss = model::loss_rec_gmm(
        out, y, gauss::DiscreteDist(VectorXd::Constant(1, 1.0)));
    CHECK(loss > prev);
    prev = loss;
  }
}

// ---- the model itself -------------------------------------------------------

TEST_CASE("variant names round-trip and gate the latent shape") {
  using model::Variant;
  for (auto v : {Variant::kCvae, Variant::kCuae, Variant::kGmmCvae,
                 Variant::kGmmCuae})
    CHECK(model::variant_from_name(model::variant_name(v)) == v);
  CHECK_THROWS_AS(model::variant_from_name("vae"), std::invalid_argument);

  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 7, xs, ys);

  model::Model plain(Variant::kCvae, tiny_config());
  plain.init_params(1);
  CHECK(plain.encode_prior(xs[0]).size() == 1);
  CHECK(plain.encode_posterior(xs[0], ys[0]).size() == 1);

  model::Model mix(Variant::kGmmCvae, tiny_config());
  mix.init_params(1);
  auto enc = mix.encode_prior(xs[0]);
  CHECK(enc.size() == 2);
  CHECK(enc.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(enc.weights.minCoeff() > 0.0);
}

TEST_CASE("context vectors scale the history and keep the block order") {
  model::Model m(model::Variant::kCvae, tiny_config());
  m.init_params(3);
  SceneContext x;
  x.history = Eigen::MatrixX2d(4, 2);
  x.history << 1, 10, 2, 20, 3, 30, 4, 40;
  x.features = Eigen::Vector2d(7.0, -7.0);
  VectorXd v = m.context_vec(x);
  REQUIRE(v.size() == 10);
  for (int i = 0; i < 4; ++i) {
    CHECK(v[i] == doctest::Approx(0.1 * (i + 1)).epsilon(1e-12));
    CHECK(v[4 + i] == doctest::Approx(1.0 * (i + 1)).epsilon(1e-12));
  }
  CHECK(v[8] == 7.0);
  CHECK(v[9] == -7.0);
}

TEST_CASE("decoding is deterministic and horizon-shaped") {
  model::Model m(model::Variant::kCuae, tiny_config());
  m.init_params(5);
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 11, xs, ys);
  VectorXd z = VectorXd::Constant(2, 0.3);
  Trajectory a = m.decode(xs[0], z);
  Trajectory b = m.decode(xs[0], z);
  CHECK(a.rows() == 5);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("the loss graph splits exactly into reconstruction plus KL") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(4, 13, xs, ys);
  for (auto v : {model::Variant::kCvae, model::Variant::kCuae,
                 model::Variant::kGmmCvae, model::Variant::kGmmCuae}) {
    model::Model m(v, tiny_config());
    m.init_params(17);
    nn::Tape tape;
    auto binds = m.lease(tape);
    auto batch = m.make_batch(xs, ys);
    std::mt19937_64 rng(1);
    auto loss = m.build_loss(tape, binds, batch, 3, rng);
    double total = tape.value(loss.total)(0, 0);
    double rec = tape.value(loss.rec)(0, 0);
    double kl = tape.value(loss.kl)(0, 0);
    CHECK(std::isfinite(total));
    CHECK(kl >= -1e-12);
    CHECK(std::abs(total - (rec + kl)) < 1e-12);
    tape.backward(loss.total);
    for (const auto& g : m.gradients(tape, binds))
      CHECK(g.allFinite());
  }
}

TEST_CASE("batch assembly lays scenes out column by column") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(3, 19, xs, ys);
  model::Model m(model::Variant::kCvae, tiny_config());
  auto batch = m.make_batch(xs, ys);
  CHECK(batch.ctx.rows() == 10);
  CHECK(batch.ctx.cols() == 3);
  CHECK(batch.target.rows() == 10);  // x-block over y-block, 2T
  CHECK(batch.target.cols() == 3);
  CHECK(batch.last_pos.rows() == 2);
  for (int b = 0; b < 3; ++b) {
    CHECK((batch.ctx.col(b) - m.context_vec(xs[b])).cwiseAbs().maxCoeff() ==
          0.0);
    for (int t = 0; t < 5; ++t) {
      CHECK(batch.target(t, b) == ys[b](t, 0));
      CHECK(batch.target(5 + t, b) == ys[b](t, 1));
    }
    CHECK(batch.last_pos(0, b) == xs[b].history(3, 0));
    CHECK(batch.last_pos(1, b) == xs[b].history(3, 1));
  }
}

TEST_CASE("a full sigma set makes inference seed-independent") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 23, xs, ys);
  model::Model m(model::Variant::kCuae, tiny_config());
  m.init_params(29);
  model::PredictOpts opts;
  opts.mode = model::PredictMode::kSigma;
  opts.n_samples = 5;  // 2n+1 for n=2
  opts.seed = 1;
  auto a = m.predict(xs[0], opts);
  opts.seed = 999;
  auto b = m.predict(xs[0], opts);
  REQUIRE(a.set.trajs.size() == b.set.trajs.size());
  for (size_t i = 0; i < a.set.trajs.size(); ++i)
    CHECK((a.set.trajs[i] - b.set.trajs[i]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.set.weights - b.set.weights).cwiseAbs().maxCoeff() == 0.0);

  // Clustering the sigma set stays deterministic too.
  opts.cluster = true;
  opts.n_outputs = 2;
  opts.seed = 5;
  auto c = m.predict(xs[0], opts);
  opts.seed = 987654;
  auto d = m.predict(xs[0], opts);
  REQUIRE(c.set.trajs.size() == 2);
  for (size_t i = 0; i < 2; ++i)
    CHECK((c.set.trajs[i] - d.set.trajs[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random-mode inference is reproducible only by seed") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 31, xs, ys);
  model::Model m(model::Variant::kCvae, tiny_config());
  m.init_params(37);
  model::PredictOpts opts;
  opts.mode = model::PredictMode::kPrior;
  opts.n_samples = 6;
  opts.seed = 8;
  auto a = m.predict(xs[0], opts);
  auto b = m.predict(xs[0], opts);
  REQUIRE(a.set.trajs.size() == 6);
  CHECK(a.set.weights.isApproxToConstant(1.0 / 6.0, 1e-15));
  for (size_t i = 0; i < 6; ++i)
    CHECK((a.set.trajs[i] - b.set.trajs[i]).cwiseAbs().maxCoeff() == 0.0);
  opts.seed = 9;
  auto c = m.predict(xs[0], opts);
  double moved = 0.0;
  for (size_t i = 0; i < 6; ++i)
    moved += (a.set.trajs[i] - c.set.trajs[i]).cwiseAbs().sum();
  CHECK(moved > 0.0);
}

TEST_CASE("mixture inference returns the prior weights and decode means") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 41, xs, ys);
  model::Model m(model::Variant::kGmmCuae, tiny_config());
  m.init_params(43);
  model::PredictOpts opts;
  opts.mode = model::PredictMode::kSigma;
  opts.n_samples = 5;
  auto res = m.predict(xs[0], opts);
  REQUIRE(res.gmm.has_value());
  const auto& gmm = *res.gmm;
  REQUIRE(gmm.size() == 2);

  auto prior = m.encode_prior(xs[0]);
  CHECK((gmm.weights - prior.weights).cwiseAbs().maxCoeff() == 0.0);

  // Each centroid is the mean of that component's decoded sigma points.
  for (int c = 0; c < 2; ++c) {
    MatrixXd pts = unscented::sigma_points(prior.comps[c]);
    Trajectory mean = Trajectory::Zero(5, 2);
    for (int k = 0; k < pts.cols(); ++k)
      mean += m.decode(xs[0], pts.col(k));
    mean /= static_cast<double>(pts.cols());
    CHECK((gmm.centroids[c] - mean).cwiseAbs().maxCoeff() < 1e-12);
  }

  // The flat candidate view mirrors the mixture.
  REQUIRE(res.set.trajs.size() == 2);
  for (int c = 0; c < 2; ++c)
    CHECK((res.set.trajs[c] - gmm.centroids[c]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((res.set.weights - gmm.weights).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inference rejects inconsistent option combinations") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 47, xs, ys);
  model::Model mix(model::Variant::kGmmCvae, tiny_config());
  mix.init_params(53);
  model::PredictOpts opts;
  opts.mode = model::PredictMode::kPrior;
  opts.n_samples = 4;
  opts.cluster = true;
  opts.n_outputs = 2;
  CHECK_THROWS_AS(mix.predict(xs[0], opts), std::invalid_argument);
  opts.cluster = false;
  opts.mode = model::PredictMode::kCxp;
  CHECK_THROWS_AS(mix.predict(xs[0], opts), std::invalid_argument);

  model::Model plain(model::Variant::kCuae, tiny_config());
  plain.init_params(53);
  model::PredictOpts bad;
  bad.mode = model::PredictMode::kSigma;
  bad.n_samples = 4;  // even
  CHECK_THROWS_AS(plain.predict(xs[0], bad), std::invalid_argument);
  bad.n_samples = 7;  // above 2n+1
  CHECK_THROWS_AS(plain.predict(xs[0], bad), std::invalid_argument);
  model::PredictOpts cxp;
  cxp.mode = model::PredictMode::kCxp;
  CHECK_THROWS_AS(plain.predict(xs[0], cxp), std::invalid_argument);  // no joint
  model::PredictOpts mismatch;
  mismatch.mode = model::PredictMode::kPrior;
  mismatch.n_samples = 6;
  mismatch.n_outputs = 3;  // != K without clustering
  CHECK_THROWS_AS(plain.predict(xs[0], mismatch), std::invalid_argument);
}

TEST_CASE("clustered inference returns the requested candidate count") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(1, 59, xs, ys);
  model::Model m(model::Variant::kCvae, tiny_config());
  m.init_params(61);
  model::PredictOpts opts;
  opts.mode = model::PredictMode::kPrior;
  opts.n_samples = 12;
  opts.cluster = true;
  opts.n_outputs = 3;
  opts.seed = 2;
  auto res = m.predict(xs[0], opts);
  REQUIRE(res.set.trajs.size() == 3);
  CHECK(res.set.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  int total = 0;
  for (int c : res.set.counts) total += c;
  CHECK(total == 12);
  CHECK(res.set.step_covs.size() == 3);
}

// ---- training ---------------------------------------------------------------

TEST_CASE("one epoch on a tiny dataset logs a finite loss for every variant") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(8, 67, xs, ys);
  for (auto v : {model::Variant::kCvae, model::Variant::kCuae,
                 model::Variant::kGmmCvae, model::Variant::kGmmCuae}) {
    model::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 4;
    tc.n_samples = 3;
    tc.base_lr = 1e-3;
    tc.seed = 5;
    model::TrainState st{model::Model(v, tiny_config()), nn::Adam(), tc, 0, {}};
    st.model.init_params(tc.seed);
    auto rows = model::train(st, xs, ys);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].epoch == 0);
    CHECK(rows[0].lr == 1e-3);
    CHECK(std::isfinite(rows[0].loss_total));
    CHECK(rows[0].loss_total ==
          doctest::Approx(rows[0].loss_rec + rows[0].loss_kl).epsilon(1e-9));
    CHECK(st.epochs_done == 1);
    CHECK(!st.rng_state.empty());
  }
}

TEST_CASE("training is bit-deterministic in the seed") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(10, 71, xs, ys);
  model::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.n_samples = 4;
  tc.seed = 9;

  auto run = [&](model::TrainState& st) {
    st.model.init_params(tc.seed);
    return model::train(st, xs, ys);
  };
  model::TrainState a{model::Model(model::Variant::kCvae, tiny_config()),
                      nn::Adam(), tc, 0, {}};
  model::TrainState b{model::Model(model::Variant::kCvae, tiny_config()),
                      nn::Adam(), tc, 0, {}};
  auto ra = run(a);
  auto rb = run(b);
  REQUIRE(ra.size() == rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].loss_total == rb[i].loss_total);  // bitwise
    CHECK(ra[i].loss_rec == rb[i].loss_rec);
    CHECK(ra[i].loss_kl == rb[i].loss_kl);
  }
  CHECK(params_identical(a.model, b.model));
  CHECK(a.rng_state == b.rng_state);
}

TEST_CASE("a checkpointed run resumes exactly where it stopped") {
  namespace fs = std::filesystem;
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(10, 73, xs, ys);

  model::TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 4;
  tc.n_samples = 3;
  tc.seed = 3;

  // Straight-through run.
  model::TrainState straight{
      model::Model(model::Variant::kCuae, tiny_config()), nn::Adam(), tc, 0,
      {}};
  straight.model.init_params(tc.seed);
  auto rows_straight = model::train(straight, xs, ys);

  // Stop after two epochs, checkpoint, reload, finish.
  model::TrainConfig tc_half = tc;
  tc_half.epochs = 2;
  model::TrainState half{model::Model(model::Variant::kCuae, tiny_config()),
                         nn::Adam(), tc_half, 0, {}};
  half.model.init_params(tc.seed);
  auto rows_first = model::train(half, xs, ys);

  fs::path dir = fs::temp_directory_path() / "cuae_models_test";
  fs::create_directories(dir);
  std::string ckpt = (dir / "checkpoint.json").string();
  model::save_checkpoint(ckpt, half);

  model::TrainState resumed = model::load_checkpoint(ckpt);
  CHECK(resumed.epochs_done == 2);
  CHECK(params_identical(resumed.model, half.model));
  resumed.tcfg.epochs = 4;
  auto rows_rest = model::train(resumed, xs, ys);

  REQUIRE(rows_first.size() + rows_rest.size() == rows_straight.size());
  for (size_t i = 0; i < rows_rest.size(); ++i) {
    CHECK(rows_rest[i].loss_total ==
          rows_straight[rows_first.size() + i].loss_total);
    CHECK(rows_rest[i].loss_kl ==
          rows_straight[rows_first.size() + i].loss_kl);
  }
  CHECK(params_identical(resumed.model, straight.model));
  CHECK(resumed.rng_state == straight.rng_state);

  // The checkpoint file itself round-trips byte for byte.
  model::TrainState reloaded = model::load_checkpoint(ckpt);
  std::string ckpt2 = (dir / "checkpoint2.json").string();
  model::save_checkpoint(ckpt2, reloaded);
  std::ifstream f1(ckpt, std::ios::binary), f2(ckpt2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  fs::remove_all(dir);
}

TEST_CASE("training rejects a sample count the sigma set cannot honor") {
  std::vector<SceneContext> xs;
  std::vector<Trajectory> ys;
  tiny_scenes(4, 79, xs, ys);
  model::TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.n_samples = 4;  // even: no +/- pairing
  tc.seed = 1;
  model::TrainState st{model::Model(model::Variant::kCuae, tiny_config()),
                       nn::Adam(), tc, 0, {}};
  st.model.init_params(1);
  CHECK_THROWS(model::train(st, xs, ys));
}

TEST_CASE("the training log is a plain csv with an append mode") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cuae_trainlog_test";
  fs::create_directories(dir);
  std::string path = (dir / "train_log.csv").string();
  std::vector<model::EpochRow> rows = {{0, 1e-3, 5.0, 4.0, 1.0}};
  model::write_train_log(path, rows, /*append=*/false);
  std::vector<model::EpochRow> more = {{1, 1e-3, 4.5, 3.75, 0.75}};
  model::write_train_log(path, more, /*append=*/true);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "epoch,lr,loss_total,loss_rec,loss_kl");
  int n_rows = 0;
  while (std::getline(f, line))
    if (!line.empty()) ++n_rows;
  CHECK(n_rows == 2);
  fs::remove_all(dir);
}

TEST_CASE("config files override fields and reject what they cannot parse") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "cuae_config_test";
  fs::create_directories(dir);
  std::string path = (dir / "run.cfg").string();
  {
    std::ofstream f(path);
    f << "# comment line\n"
      << "variant = gmm-cuae\n"
      << "latent_dim = 4\n"
      << "components = 3\n"
      << "hidden = 32, 16\n"
      << "weights_hidden = 8\n"
      << "batchnorm = off\n"
      << "sigma = 0.5\n"
      << "epochs = 12\n"
      << "batch_size = 32\n"
      << "samples = 9\n"
      << "lr = 0.0005\n"
      << "seed = 77\n";
  }
  model::RunConfig cfg;
  model::apply_config_file(path, cfg);
  CHECK(cfg.variant == model::Variant::kGmmCuae);
  CHECK(cfg.model.latent_dim == 4);
  CHECK(cfg.model.n_components == 3);
  CHECK(cfg.model.hidden == std::vector<int>{32, 16});
  CHECK(cfg.model.weights_hidden == std::vector<int>{8});
  CHECK(cfg.model.batchnorm == false);
  CHECK(cfg.model.sigma == 0.5);
  CHECK(cfg.train.epochs == 12);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.n_samples == 9);
  CHECK(cfg.train.base_lr == 0.0005);
  CHECK(cfg.train.seed == 77);

  {
    std::ofstream f(path);
    f << "epochs = 5\nwarmup = 3\n";
  }
  model::RunConfig bad;
  CHECK_THROWS_WITH_AS(model::apply_config_file(path, bad),
                       doctest::Contains(":2"), std::invalid_argument);
  {
    std::ofstream f(path);
    f << "epochs = soon\n";
  }
  CHECK_THROWS_AS(model::apply_config_file(path, bad), std::invalid_argument);
  fs::remove_all(dir);
}

}  // TEST_SUITE
