#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cuae/postprocess/kmeans.hpp"
#include "cuae/postprocess/nll.hpp"

using namespace cuae;
using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

VectorXd pt1(double x) {
  VectorXd v(1);
  v << x;
  return v;
}

Trajectory line(int T, double dx, double dy, double x0 = 0.0, double y0 = 0.0) {
  Trajectory tr(T, 2);
  for (int t = 0; t < T; ++t) {
    tr(t, 0) = x0 + dx * (t + 1);
    tr(t, 1) = y0 + dy * (t + 1);
  }
  return tr;
}

PredictionSet iso_set(std::vector<Trajectory> trajs, VectorXd weights) {
  PredictionSet s;
  s.trajs = std::move(trajs);
  s.weights = std::move(weights);
  return s;
}

// Exhaustive best SSE over all cluster assignments (empty clusters allowed),
// for cross-checking small instances.
double brute_force_sse(const std::vector<VectorXd>& pts, int k) {
  const int n = static_cast<int>(pts.size());
  const auto d = pts.front().size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> assign(n, 0);
  const long total = std::lround(std::pow(k, n));
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int i = 0; i < n; ++i) {
      assign[i] = static_cast<int>(c % k);
      c /= k;
    }
    std::vector<VectorXd> sums(k, VectorXd::Zero(d));
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums[assign[i]] += pts[i];
      counts[assign[i]] += 1;
    }
    double sse = 0.0;
    for (int i = 0; i < n; ++i)
      sse += (pts[i] - sums[assign[i]] / counts[assign[i]]).squaredNorm();
    best = std::min(best, sse);
  }
  return best;
}

}  // namespace

TEST_SUITE("postprocess") {

TEST_CASE("two well-separated pairs split at their midpoints") {
  std::vector<VectorXd> pts = {pt1(0.0), pt1(0.1), pt1(10.0), pt1(10.1)};
  for (uint64_t seed : {0, 1, 2, 7, 19}) {
    auto res = post::kmeans(pts, 2, seed);
    std::vector<double> c = {res.centroids[0][0], res.centroids[1][0]};
    std::sort(c.begin(), c.end());
    CHECK(c[0] == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(c[1] == doctest::Approx(10.05).epsilon(1e-12));
    CHECK(res.sse == doctest::Approx(0.01).epsilon(1e-9));
    CHECK(res.counts[0] + res.counts[1] == 4);
  }
}

TEST_CASE("as many clusters as points means zero error") {
  std::vector<VectorXd> pts = {pt1(-3.0), pt1(1.0), pt1(4.5), pt1(9.25)};
  auto res = post::kmeans(pts, 4, 5);
  CHECK(res.sse == 0.0);
  std::vector<double> c;
  for (const auto& v : res.centroids) c.push_back(v[0]);
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<double>{-3.0, 1.0, 4.5, 9.25});
  for (int ct : res.counts) CHECK(ct == 1);
}

TEST_CASE("identical points collapse without dividing by an empty cluster") {
  std::vector<VectorXd> pts(4, pt1(5.0));
  auto res = post::kmeans(pts, 2, 3);
  CHECK(res.sse == 0.0);
  CHECK(res.counts[0] + res.counts[1] == 4);
  for (const auto& c : res.centroids) CHECK(c[0] == 5.0);
}

TEST_CASE("same seed, same clustering, bit for bit") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<VectorXd> pts;
  for (int i = 0; i < 20; ++i)
    pts.push_back(Eigen::Vector3d(normal(rng), normal(rng), normal(rng)));
  auto a = post::kmeans(pts, 4, 99);
  auto b = post::kmeans(pts, 4, 99);
  CHECK(a.assignment == b.assignment);
  CHECK(a.sse == b.sse);
  for (int c = 0; c < 4; ++c)
    CHECK((a.centroids[c] - b.centroids[c]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("small instances land on the global optimum nearly always") {
  // Blob-structured instances, like the multi-modal sample sets this is
  // used on. A single Lloyd run is a local method, so a few misses are
  // tolerated; every run must still be at least as bad as the true optimum.
  int optimal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int n = 5 + static_cast<int>(rng() % 4);  // 5..8 points
    const int k = 2 + static_cast<int>(rng() % 2);  // 2..3 clusters
    std::vector<VectorXd> pts;
    for (int i = 0; i < n; ++i) {
      const double angle = 2.0 * M_PI * (i % k) / k;
      pts.push_back(Eigen::Vector2d(6.0 * std::cos(angle) + normal(rng),
                                    6.0 * std::sin(angle) + normal(rng)));
    }
    auto res = post::kmeans(pts, k, rng());
    const double best = brute_force_sse(pts, k);
    CHECK(res.sse >= best - 1e-9);
    if (res.sse <= best + 1e-9) ++optimal;
  }
  CHECK(optimal >= 95);
}

TEST_CASE("kmeans input validation") {
  std::vector<VectorXd> pts = {pt1(0.0), pt1(1.0)};
  CHECK_THROWS_AS(post::kmeans({}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(post::kmeans(pts, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(post::kmeans(pts, 3, 0), std::invalid_argument);
  std::vector<VectorXd> mixed = {pt1(0.0), Eigen::Vector2d(1.0, 2.0)};
  CHECK_THROWS_AS(post::kmeans(mixed, 1, 0), std::invalid_argument);
}

TEST_CASE("clustering as many trajectories as clusters returns them verbatim") {
  std::vector<Trajectory> trajs = {line(6, 1.0, 0.0), line(6, 0.0, 1.0),
                                   line(6, -1.0, 0.5)};
  auto set = post::cluster_trajectories(trajs, 3, 21);
  REQUIRE(set.trajs.size() == 3);
  CHECK(std::abs(set.weights.sum() - 1.0) < 1e-12);
  for (const auto& input : trajs) {
    bool found = false;
    for (size_t c = 0; c < set.trajs.size(); ++c)
      if ((set.trajs[c] - input).cwiseAbs().maxCoeff() == 0.0) found = true;
    CHECK(found);
  }
  for (int c = 0; c < 3; ++c) {
    CHECK(set.weights[c] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(set.counts[c] == 1);
    // Singleton clusters keep only the diagonal floor.
    for (const auto& cov : set.step_covs[c])
      CHECK((cov - 1e-6 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() ==
            0.0);
  }
}

TEST_CASE("two bundles of ten get half the weight each") {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> jitter(0.0, 0.05);
  std::vector<Trajectory> trajs;
  for (int b = 0; b < 2; ++b) {
    const Trajectory base = line(8, 1.0, 0.0, 0.0, b * 50.0);
    for (int i = 0; i < 10; ++i) {
      Trajectory tr = base;
      for (int t = 0; t < 8; ++t) {
        tr(t, 0) += jitter(rng);
        tr(t, 1) += jitter(rng);
      }
      trajs.push_back(tr);
    }
  }
  auto set = post::cluster_trajectories(trajs, 2, 4);
  CHECK(set.weights[0] == 0.5);
  CHECK(set.weights[1] == 0.5);
  CHECK(set.weights.sum() == 1.0);
  CHECK(set.counts[0] == 10);
  CHECK(set.counts[1] == 10);
  // Each centroid sits near one bundle's spine, far from the other.
  for (int c = 0; c < 2; ++c) {
    const double y = set.trajs[c](0, 1);
    CHECK((std::abs(y) < 1.0 || std::abs(y - 50.0) < 1.0));
    for (const auto& cov : set.step_covs[c]) {
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
      CHECK(es.eigenvalues().minCoeff() > 0.0);
      CHECK(cov(0, 0) < 0.05);  // jitter-sized scatter, not bundle-sized
    }
  }
}

TEST_CASE("horizons map to ten-per-second step indices") {
  CHECK(post::horizon_index(1.0, 30) == 9);
  CHECK(post::horizon_index(2.0, 30) == 19);
  CHECK(post::horizon_index(3.0, 30) == 29);
  CHECK(post::horizon_index(0.1, 30) == 0);
  CHECK_THROWS_AS(post::horizon_index(3.1, 30), std::invalid_argument);
  CHECK_THROWS_AS(post::horizon_index(0.0, 30), std::invalid_argument);
  CHECK_THROWS_AS(post::horizon_index(1.0, 5), std::invalid_argument);
}

TEST_CASE("a perfect isotropic hit scores the two-dimensional entropy floor") {
  Trajectory y = line(10, 0.5, 0.2);
  auto set = iso_set({y}, pt1(1.0));
  CHECK(post::winner_nll(set, y, 1.0) == doctest::Approx(1.8378771).epsilon(1e-6));
  CHECK(post::winner_nll(set, y, 1.0) == doctest::Approx(kLog2Pi).epsilon(1e-12));
}

TEST_CASE("one meter of miss costs half a nat under a unit Gaussian") {
  Trajectory y = line(10, 0.5, 0.0);
  Trajectory off = y;
  off(9, 0) += 1.0;
  auto set = iso_set({off}, pt1(1.0));
  CHECK(post::winner_nll(set, y, 1.0) ==
        doctest::Approx(kLog2Pi + 0.5).epsilon(1e-12));
}

TEST_CASE("the winner is picked by distance, never by its own likelihood") {
  Trajectory y = line(10, 1.0, 0.0);
  Trajectory near = y;
  near(9, 0) += 0.5;  // closer at the horizon
  Trajectory far = y;
  far(9, 0) += 3.0;

  PredictionSet set;
  set.trajs = {far, near};
  set.weights = Eigen::Vector2d(0.5, 0.5);
  // The far candidate is supremely confident; the near one is vague. Distance
  // still decides, so the vague near candidate scores.
  set.step_covs = {
      std::vector<Eigen::Matrix2d>(10, 1e-4 * Eigen::Matrix2d::Identity()),
      std::vector<Eigen::Matrix2d>(10, 25.0 * Eigen::Matrix2d::Identity())};
  const double want =
      kLog2Pi + 0.5 * std::log(25.0 * 25.0) + 0.5 * (0.25 / 25.0);
  CHECK(post::winner_nll(set, y, 1.0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("equidistant winners resolve to the first candidate") {
  Trajectory y = line(10, 1.0, 0.0);
  Trajectory left = y, right = y;
  left(9, 1) += 2.0;
  right(9, 1) -= 2.0;
  PredictionSet set;
  set.trajs = {left, right};
  set.weights = Eigen::Vector2d(0.5, 0.5);
  set.step_covs = {
      std::vector<Eigen::Matrix2d>(10, 4.0 * Eigen::Matrix2d::Identity()),
      std::vector<Eigen::Matrix2d>(10, Eigen::Matrix2d::Identity())};
  // Scored with the first candidate's covariance: log det 16 term plus 4/(2*4).
  const double want = kLog2Pi + 0.5 * std::log(16.0) + 0.5;
  CHECK(post::winner_nll(set, y, 1.0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("anisotropic covariances enter through their full quadratic form") {
  Trajectory y = line(10, 1.0, 0.0);
  Trajectory c = y;
  c(9, 0) -= 2.0;
  c(9, 1) -= 1.0;
  PredictionSet set;
  set.trajs = {c};
  set.weights = pt1(1.0);
  Eigen::Matrix2d cov;
  cov << 4.0, 0.0, 0.0, 1.0;
  set.step_covs = {std::vector<Eigen::Matrix2d>(10, cov)};
  const double want = kLog2Pi + 0.5 * std::log(4.0) + 0.5 * (4.0 / 4.0 + 1.0);
  CHECK(post::winner_nll(set, y, 1.0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("a one-component mixture at the truth is the entropy floor too") {
  Trajectory y = line(10, 0.3, -0.1);
  auto set = iso_set({y}, pt1(1.0));
  CHECK(post::mixture_nll(set, y, 1.0) ==
        doctest::Approx(kLog2Pi).epsilon(1e-12));
}

TEST_CASE("half the mass wasted on a distant mode costs exactly log two") {
  Trajectory y = line(10, 0.3, 0.0);
  Trajectory away = y;
  away.col(1).array() += 40.0;
  auto set = iso_set({y, away}, Eigen::Vector2d(0.5, 0.5));
  CHECK(post::mixture_nll(set, y, 1.0) ==
        doctest::Approx(kLog2Pi + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("one-hot mixture weights reduce to the single candidate's score") {
  Trajectory y = line(10, 0.3, 0.0);
  Trajectory near = y;
  near(9, 0) += 0.7;
  Trajectory away = y;
  away.col(1).array() += 40.0;
  auto set = iso_set({near, away}, Eigen::Vector2d(1.0, 0.0));
  CHECK(post::mixture_nll(set, y, 1.0) ==
        doctest::Approx(post::winner_nll(set, y, 1.0)).epsilon(1e-12));
}

TEST_CASE("an underflowing mixture reports the sentinel, not infinity") {
  Trajectory y = line(10, 0.3, 0.0);
  Trajectory away = y;
  away.col(1).array() += 60.0;
  auto set = iso_set({away}, pt1(1.0));
  const double nll = post::mixture_nll(set, y, 1.0);
  CHECK(nll == post::kNllSentinel);
  CHECK(post::nll_is_sentinel(nll));
  CHECK(!post::nll_is_sentinel(post::kNllSentinel - 1.0));
}

TEST_CASE("the gmm overload agrees with the flat prediction-set overload") {
  Trajectory y = line(10, 0.4, 0.1);
  Trajectory a = y, b = y;
  a(9, 0) += 1.0;
  b(9, 1) -= 2.0;
  Eigen::Matrix2d cov;
  cov << 2.0, 0.3, 0.3, 1.0;

  PredictionSet set;
  set.trajs = {a, b};
  set.weights = Eigen::Vector2d(0.7, 0.3);
  set.step_covs = {std::vector<Eigen::Matrix2d>(10, cov),
                   std::vector<Eigen::Matrix2d>(10, cov)};
  OutputGmm gmm;
  gmm.centroids = set.trajs;
  gmm.step_covs = set.step_covs;
  gmm.weights = set.weights;
  CHECK(post::mixture_nll(gmm, y, 1.0) == post::mixture_nll(set, y, 1.0));
}

TEST_CASE("malformed prediction sets are rejected") {
  Trajectory y = line(10, 0.3, 0.0);
  auto ok = iso_set({y}, pt1(1.0));

  auto bad_weights = ok;
  bad_weights.weights = pt1(0.5);
  CHECK_THROWS_AS(post::mixture_nll(bad_weights, y, 1.0),
                  std::invalid_argument);

  auto short_traj = ok;
  short_traj.trajs = {line(5, 0.3, 0.0)};
  CHECK_THROWS_AS(post::mixture_nll(short_traj, y, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(post::winner_nll(short_traj, y, 1.0),
                  std::invalid_argument);

  auto short_covs = ok;
  short_covs.step_covs = {
      std::vector<Eigen::Matrix2d>(5, Eigen::Matrix2d::Identity())};
  CHECK_THROWS_AS(post::mixture_nll(short_covs, y, 1.0),
                  std::invalid_argument);

  PredictionSet empty;
  empty.weights = VectorXd(0);
  CHECK_THROWS_AS(post::mixture_nll(empty, y, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(post::winner_nll(empty, y, 1.0), std::invalid_argument);
}

}  // TEST_SUITE
