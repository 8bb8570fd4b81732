#include "cuae/postprocess/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace cuae::post {

namespace {

constexpr double kCovReg = 1e-6;

double dist2(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).squaredNorm();
}

/// k-means++ seeding: first centroid uniform, the rest sampled with
/// probability proportional to squared distance from the nearest chosen one.
/// If all remaining mass is zero (duplicate points), fall back to the lowest
/// unchosen index so seeding always completes.
std::vector<Eigen::VectorXd> seed_centroids(
    const std::vector<Eigen::VectorXd>& pts, int k, std::mt19937_64& rng) {
  const int n = static_cast<int>(pts.size());
  std::vector<Eigen::VectorXd> centroids;
  centroids.reserve(k);
  std::vector<bool> chosen(n, false);

  std::uniform_int_distribution<int> first(0, n - 1);
  int idx = first(rng);
  centroids.push_back(pts[idx]);
  chosen[idx] = true;

  std::vector<double> d2(n);
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centroids) best = std::min(best, dist2(pts[i], c));
      d2[i] = chosen[i] ? 0.0 : best;
      total += d2[i];
    }
    int pick = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> unif(0.0, total);
      const double r = unif(rng);
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && r < acc) {
          pick = i;
          break;
        }
      }
    }
    if (pick < 0) {  // duplicates exhausted the mass; take lowest unchosen
      for (int i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    if (pick < 0) pick = 0;  // every point already a centroid: duplicate it
    centroids.push_back(pts[pick]);
    chosen[pick] = true;
  }
  return centroids;
}

}  // namespace

KmeansResult kmeans(const std::vector<Eigen::VectorXd>& points, int n_clusters,
                    uint64_t seed, int max_iter) {
  const int n = static_cast<int>(points.size());
  if (n == 0) throw std::invalid_argument("kmeans: no points");
  if (n_clusters < 1)
    throw std::invalid_argument("kmeans: n_clusters must be positive");
  if (n_clusters > n)
    throw std::invalid_argument("kmeans: " + std::to_string(n_clusters) +
                                " clusters requested for " + std::to_string(n) +
                                " points");
  const auto d = points.front().size();
  for (const auto& p : points)
    if (p.size() != d)
      throw std::invalid_argument("kmeans: points have mixed dimensions");

  std::mt19937_64 rng(seed);
  KmeansResult res;
  res.centroids = seed_centroids(points, n_clusters, rng);
  res.assignment.assign(n, -1);

  double prev_sse = std::numeric_limits<double>::infinity();
  std::vector<int> new_assign(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = dist2(points[i], res.centroids[0]);
      for (int c = 1; c < n_clusters; ++c) {
        const double dc = dist2(points[i], res.centroids[c]);
        if (dc < best_d) {  // strict: ties keep the lower index
          best_d = dc;
          best = c;
        }
      }
      new_assign[i] = best;
      sse += best_d;
    }
    if (sse > prev_sse + 1e-9 * std::max(1.0, prev_sse))
      throw std::logic_error("kmeans: SSE increased between iterations");
    res.sse = sse;
    res.n_iter = iter + 1;
    const bool stable = (iter > 0 && new_assign == res.assignment);
    res.assignment = new_assign;
    if (stable) break;
    prev_sse = sse;

    // Update step: mean of each cluster; empty clusters reseed at the point
    // currently farthest from its own centroid.
    std::vector<Eigen::VectorXd> sums(n_clusters, Eigen::VectorXd::Zero(d));
    std::vector<int> counts(n_clusters, 0);
    for (int i = 0; i < n; ++i) {
      sums[res.assignment[i]] += points[i];
      counts[res.assignment[i]] += 1;
    }
    std::vector<bool> reseeded(n, false);
    for (int c = 0; c < n_clusters; ++c) {
      if (counts[c] > 0) {
        res.centroids[c] = sums[c] / counts[c];
        continue;
      }
      int far = -1;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        if (reseeded[i]) continue;
        const double di = dist2(points[i], res.centroids[res.assignment[i]]);
        if (di > far_d) {
          far_d = di;
          far = i;
        }
      }
      res.centroids[c] = points[far];
      reseeded[far] = true;
    }
  }

  res.counts.assign(n_clusters, 0);
  for (int i = 0; i < n; ++i) res.counts[res.assignment[i]] += 1;
  return res;
}

PredictionSet cluster_trajectories(const std::vector<Trajectory>& trajs,
                                   int n_clusters, uint64_t seed) {
  if (trajs.empty())
    throw std::invalid_argument("cluster_trajectories: no trajectories");
  const int t_len = static_cast<int>(trajs.front().rows());
  std::vector<Eigen::VectorXd> flat;
  flat.reserve(trajs.size());
  for (const auto& tr : trajs) {
    if (tr.rows() != t_len)
      throw std::invalid_argument(
          "cluster_trajectories: trajectories have mixed lengths");
    Eigen::VectorXd v(2 * t_len);
    v.head(t_len) = tr.col(0);
    v.tail(t_len) = tr.col(1);
    flat.push_back(std::move(v));
  }

  const auto km = kmeans(flat, n_clusters, seed);
  const int k_total = static_cast<int>(trajs.size());

  PredictionSet out;
  out.trajs.resize(n_clusters);
  out.counts = km.counts;
  out.weights.resize(n_clusters);
  out.step_covs.assign(n_clusters,
                       std::vector<Eigen::Matrix2d>(
                           t_len, kCovReg * Eigen::Matrix2d::Identity()));
  for (int c = 0; c < n_clusters; ++c) {
    Trajectory tr(t_len, 2);
    tr.col(0) = km.centroids[c].head(t_len);
    tr.col(1) = km.centroids[c].tail(t_len);
    out.trajs[c] = std::move(tr);
    out.weights[c] = static_cast<double>(km.counts[c]) / k_total;
  }
  for (int i = 0; i < k_total; ++i) {
    const int c = km.assignment[i];
    for (int t = 0; t < t_len; ++t) {
      const Eigen::Vector2d r =
          trajs[i].row(t).transpose() - out.trajs[c].row(t).transpose();
      out.step_covs[c][t] += (r * r.transpose()) / km.counts[c];
    }
  }
  return out;
}

}  // namespace cuae::post
