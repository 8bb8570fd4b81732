#include "cuae/gauss/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cuae/postprocess/kmeans.hpp"

namespace cuae::gauss {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kCollapseMass = 1e-10;

struct CompCache {
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd mean;
  double log_norm;  // log w - (d/2) log 2pi - (1/2) log det
  bool active;
};

std::vector<CompCache> factorize(const GaussianMixture& mix) {
  std::vector<CompCache> cache(mix.size());
  const int d = mix.dim();
  for (int c = 0; c < mix.size(); ++c) {
    auto& cc = cache[c];
    cc.active = mix.weights[c] > 0.0;
    if (!cc.active) continue;
    cc.mean = mix.components[c].mean;
    cc.llt.compute(mix.components[c].cov);
    if (cc.llt.info() != Eigen::Success)
      throw std::runtime_error("EM: component " + std::to_string(c) +
                               " covariance lost positive definiteness");
    const double log_det =
        2.0 * cc.llt.matrixLLT().diagonal().array().log().sum();
    cc.log_norm = std::log(mix.weights[c]) - 0.5 * d * kLog2Pi - 0.5 * log_det;
  }
  return cache;
}

/// One sample's responsibility row. Fixed component order for the
/// log-sum-exp so serial and parallel kernels agree bit for bit.
void estep_row(const std::vector<CompCache>& cache,
               const Eigen::VectorXd& x, Eigen::MatrixXd& resp,
               Eigen::VectorXd& log_lik, int i) {
  const int C = static_cast<int>(cache.size());
  Eigen::VectorXd lp(C);
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < C; ++c) {
    if (!cache[c].active) {
      lp[c] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const Eigen::VectorXd u = cache[c].llt.matrixL().solve(x - cache[c].mean);
    lp[c] = cache[c].log_norm - 0.5 * u.squaredNorm();
    mx = std::max(mx, lp[c]);
  }
  double acc = 0.0;
  for (int c = 0; c < C; ++c) acc += std::exp(lp[c] - mx);
  const double li = mx + std::log(acc);
  log_lik[i] = li;
  for (int c = 0; c < C; ++c)
    resp(i, c) = cache[c].active ? std::exp(lp[c] - li) : 0.0;
}

}  // namespace

namespace detail {

void em_estep_serial(const GaussianMixture& mix,
                     const std::vector<Eigen::VectorXd>& samples,
                     Eigen::MatrixXd& resp, Eigen::VectorXd& log_lik) {
  const auto cache = factorize(mix);
  const int n = static_cast<int>(samples.size());
  resp.resize(n, mix.size());
  log_lik.resize(n);
  for (int i = 0; i < n; ++i) estep_row(cache, samples[i], resp, log_lik, i);
}

void em_estep_parallel(const GaussianMixture& mix,
                       const std::vector<Eigen::VectorXd>& samples,
                       Eigen::MatrixXd& resp, Eigen::VectorXd& log_lik) {
  const auto cache = factorize(mix);
  const int n = static_cast<int>(samples.size());
  resp.resize(n, mix.size());
  log_lik.resize(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) estep_row(cache, samples[i], resp, log_lik, i);
}

}  // namespace detail

GaussianMixture fit_gmm_em(const std::vector<Eigen::VectorXd>& samples,
                           int n_components, uint64_t seed,
                           const EmOptions& opts, EmTrace* trace) {
  const int n = static_cast<int>(samples.size());
  if (n_components < 1)
    throw std::invalid_argument("EM: n_components must be positive");
  if (n == 0) throw std::invalid_argument("EM: no samples");
  const auto d = samples.front().size();
  if (static_cast<long>(n) < static_cast<long>(n_components) * (d + 1))
    throw std::invalid_argument(
        "EM: " + std::to_string(n) + " samples cannot support " +
        std::to_string(n_components) + " components of dimension " +
        std::to_string(d) + " (need at least C*(d+1))");
  for (const auto& s : samples)
    if (s.size() != d)
      throw std::invalid_argument("EM: samples have mixed dimensions");

  // Global scatter doubles as the reset covariance for collapsed components.
  Eigen::VectorXd global_mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : samples) global_mean += s;
  global_mean /= n;
  Eigen::MatrixXd global_cov = Eigen::MatrixXd::Zero(d, d);
  for (const auto& s : samples) {
    const Eigen::VectorXd r = s - global_mean;
    global_cov += r * r.transpose();
  }
  global_cov /= n;
  global_cov.diagonal().array() += opts.cov_reg;

  // Initialize from k-means with the caller's seed.
  const auto km = post::kmeans(samples, n_components, seed);
  GaussianMixture mix;
  mix.components.resize(n_components);
  mix.weights.resize(n_components);
  for (int c = 0; c < n_components; ++c) {
    mix.components[c].mean = km.centroids[c];
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    if (km.counts[c] > 0) {
      for (int i = 0; i < n; ++i) {
        if (km.assignment[i] != c) continue;
        const Eigen::VectorXd r = samples[i] - km.centroids[c];
        cov += r * r.transpose();
      }
      cov /= km.counts[c];
      cov.diagonal().array() += opts.cov_reg;
    } else {
      cov = global_cov;
    }
    mix.components[c].cov = cov;
    mix.weights[c] = std::max(km.counts[c], 1);
  }
  mix.weights /= mix.weights.sum();

  Eigen::MatrixXd resp;
  Eigen::VectorXd log_lik;
  double prev_ll = -std::numeric_limits<double>::infinity();
  int n_reinit = 0;

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    detail::em_estep_parallel(mix, samples, resp, log_lik);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) ll += log_lik[i];  // fixed order
    ll /= n;
    if (trace) {
      trace->mean_log_lik.push_back(ll);
      trace->n_iter = iter + 1;
    }
    if (std::isfinite(prev_ll) &&
        ll < prev_ll - 1e-9 * std::max(1.0, std::abs(prev_ll)))
      throw std::logic_error("EM: mean log-likelihood decreased from " +
                             std::to_string(prev_ll) + " to " +
                             std::to_string(ll));
    if (std::isfinite(prev_ll) && std::abs(ll - prev_ll) < opts.tol) break;
    prev_ll = ll;

    // M-step, serial with fixed accumulation order.
    bool reinit_this_iter = false;
    for (int c = 0; c < n_components; ++c) {
      double mass = 0.0;
      for (int i = 0; i < n; ++i) mass += resp(i, c);
      if (mass < kCollapseMass) {
        ++n_reinit;
        reinit_this_iter = true;
        if (trace) trace->n_reinit = n_reinit;
        if (n_reinit > 3)
          throw std::runtime_error(
              "EM: component collapsed more than three times; the data "
              "cannot support " + std::to_string(n_components) +
              " components");
        int worst = 0;
        for (int i = 1; i < n; ++i)
          if (log_lik[i] < log_lik[worst]) worst = i;
        mix.components[c].mean = samples[worst];
        mix.components[c].cov = global_cov;
        mix.weights[c] = 1.0 / n;
        continue;
      }
      mix.weights[c] = mass / n;
      Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
      for (int i = 0; i < n; ++i) mu += resp(i, c) * samples[i];
      mu /= mass;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd r = samples[i] - mu;
        cov += resp(i, c) * (r * r.transpose());
      }
      cov /= mass;
      cov.diagonal().array() += opts.cov_reg;
      mix.components[c].mean = mu;
      mix.components[c].cov = cov;
    }
    mix.weights /= mix.weights.sum();

    // Moving a collapsed component can lower the likelihood once; restart
    // the monotonicity/convergence baseline rather than flag a false bug.
    if (reinit_this_iter) prev_ll = -std::numeric_limits<double>::infinity();
  }
  return mix;
}

}  // namespace cuae::gauss
