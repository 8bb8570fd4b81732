#include "cuae/expost/expost.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "cuae/gauss/conditioning.hpp"
#include "cuae/gauss/em.hpp"
#include "cuae/unscented/sigma.hpp"

namespace cuae::expost {

namespace {

constexpr double kPruneWeight = 1e-3;
constexpr double kCholBump = 1e-6;

void check_pair_inputs(const model::Model& m,
                       const std::vector<SceneContext>& xs,
                       const std::vector<Trajectory>& ys) {
  if (model::is_gmm(m.variant()))
    throw std::invalid_argument(
        "collect_pairs: mixture-latent variants have no single encoding pair");
  if (xs.size() != ys.size())
    throw std::invalid_argument("collect_pairs: " + std::to_string(xs.size()) +
                                " scenes vs " + std::to_string(ys.size()) +
                                " targets");
}

void pair_row(const model::Model& m, const SceneContext& x,
              const Trajectory& y, Eigen::MatrixXd& rows, int i) {
  const int n = m.config().latent_dim;
  rows.row(i).head(n) = m.encode_posterior(x, y).comps[0].mean.transpose();
  rows.row(i).tail(n) = m.encode_prior(x).comps[0].mean.transpose();
}

// Lower Cholesky factor with one diagonal-bump retry.
Eigen::MatrixXd chol_or_bump(const Eigen::MatrixXd& cov, int component) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    const Eigen::MatrixXd bumped =
        cov + kCholBump * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
    llt.compute(bumped);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error(
          "cxp_sample: conditional component " + std::to_string(component) +
          " covariance is not positive definite");
  }
  return llt.matrixL();
}

}  // namespace

namespace detail {

EncodingPairSet collect_pairs_serial(const model::Model& m,
                                     const std::vector<SceneContext>& xs,
                                     const std::vector<Trajectory>& ys) {
  check_pair_inputs(m, xs, ys);
  EncodingPairSet out;
  out.rows.resize(static_cast<Eigen::Index>(xs.size()),
                  2 * m.config().latent_dim);
  for (size_t i = 0; i < xs.size(); ++i)
    pair_row(m, xs[i], ys[i], out.rows, static_cast<int>(i));
  return out;
}

}  // namespace detail

EncodingPairSet collect_pairs(const model::Model& m,
                              const std::vector<SceneContext>& xs,
                              const std::vector<Trajectory>& ys) {
  check_pair_inputs(m, xs, ys);
  EncodingPairSet out;
  out.rows.resize(static_cast<Eigen::Index>(xs.size()),
                  2 * m.config().latent_dim);
  const int n_rows = static_cast<int>(xs.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n_rows; ++i) pair_row(m, xs[i], ys[i], out.rows, i);
  return out;
}

gauss::GaussianMixture fit_joint(const EncodingPairSet& pairs,
                                 int n_components, uint64_t seed) {
  std::vector<Eigen::VectorXd> samples;
  samples.reserve(pairs.size());
  for (int i = 0; i < pairs.size(); ++i)
    samples.push_back(pairs.rows.row(i).transpose());
  return gauss::fit_gmm_em(samples, n_components, seed);
}

Eigen::VectorXd select_conditioning_sigma(const gauss::GaussianMixture& joint,
                                          const gauss::DiagGaussian& prior) {
  const int n = prior.dim();
  if (joint.dim() != 2 * n)
    throw std::invalid_argument(
        "select_conditioning_sigma: joint dim " + std::to_string(joint.dim()) +
        " does not match twice the prior dim " + std::to_string(n));
  const Eigen::MatrixXd pts = unscented::sigma_points(prior);
  int best = 0;
  double best_ld = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < pts.cols(); ++i) {
    const double ld = gauss::marginal_log_density(joint, n, pts.col(i));
    if (ld > best_ld) {
      best_ld = ld;
      best = i;
    }
  }
  return pts.col(best);
}

CxpSamples cxp_sample(const gauss::GaussianMixture& joint,
                      const Eigen::VectorXd& z_cond, int n_samples,
                      uint64_t seed, CxpMode mode) {
  const int n = static_cast<int>(z_cond.size());
  if (joint.dim() <= n)
    throw std::invalid_argument(
        "cxp_sample: conditioning vector as long as the joint");
  const int split = joint.dim() - n;
  const gauss::GaussianMixture cond =
      gauss::condition_mixture(joint, split, z_cond);

  CxpSamples out;
  if (mode == CxpMode::kRandom) {
    if (n_samples < 1)
      throw std::invalid_argument("cxp_sample: need at least one sample");
    std::vector<Eigen::MatrixXd> chol(cond.size());
    out.samples.resize(split, n_samples);
    out.weights =
        Eigen::VectorXd::Constant(n_samples, 1.0 / n_samples);
    out.component.resize(n_samples);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int k = 0; k < n_samples; ++k) {
      const double u = unif(rng);
      int c = 0;
      double acc = 0.0;
      for (; c < cond.size() - 1; ++c) {
        acc += cond.weights[c];
        if (u < acc) break;
      }
      if (chol[c].size() == 0) chol[c] = chol_or_bump(cond.components[c].cov, c);
      Eigen::VectorXd eps(split);
      for (int j = 0; j < split; ++j) eps[j] = normal(rng);
      out.samples.col(k) = cond.components[c].mean + chol[c] * eps;
      out.component[k] = c;
    }
    return out;
  }

  // Unscented: keep components carrying real conditional mass, emit the full
  // sigma set of each.
  std::vector<int> kept;
  double mass = 0.0;
  for (int c = 0; c < cond.size(); ++c)
    if (cond.weights[c] >= kPruneWeight) {
      kept.push_back(c);
      mass += cond.weights[c];
    }
  if (kept.empty())
    throw std::runtime_error("cxp_sample: every conditional component fell "
                             "under the pruning threshold");
  const int pts_per_comp = 2 * split + 1;
  const int total = static_cast<int>(kept.size()) * pts_per_comp;
  out.samples.resize(split, total);
  out.weights.resize(total);
  out.component.resize(total);
  const double root_n = std::sqrt(static_cast<double>(split));
  int col = 0;
  for (const int c : kept) {
    const Eigen::VectorXd& mu = cond.components[c].mean;
    const Eigen::MatrixXd L = chol_or_bump(cond.components[c].cov, c);
    const double w = (cond.weights[c] / mass) / pts_per_comp;
    out.samples.col(col) = mu;
    for (int j = 0; j < split; ++j)
      out.samples.col(col + 1 + j) = mu + root_n * L.col(j);
    for (int j = 0; j < split; ++j)
      out.samples.col(col + 1 + split + j) = mu - root_n * L.col(j);
    for (int k = 0; k < pts_per_comp; ++k) {
      out.weights[col + k] = w;
      out.component[col + k] = c;
    }
    col += pts_per_comp;
  }
  return out;
}

void write_pairs_csv(const std::string& path, const EncodingPairSet& pairs) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[40];
  for (int i = 0; i < pairs.size(); ++i) {
    for (int j = 0; j < pairs.dim(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", pairs.rows(i, j));
      if (j) f << ',';
      f << buf;
    }
    f << '\n';
  }
  if (!f) throw std::runtime_error("failed writing " + path);
}

EncodingPairSet read_pairs_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    size_t pos = 0;
    while (pos <= line.size()) {
      const size_t next = line.find(',', pos);
      const std::string tok =
          line.substr(pos, next == std::string::npos ? next : next - pos);
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != tok.size())
        throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                    ": bad number '" + tok + "'");
      row.push_back(v);
      if (next == std::string::npos) break;
      pos = next + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected " +
                                  std::to_string(rows.front().size()) +
                                  " columns, got " +
                                  std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  EncodingPairSet out;
  if (rows.empty()) {
    out.rows.resize(0, 0);
    return out;
  }
  out.rows.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(rows.front().size()));
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j)
      out.rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return out;
}

}  // namespace cuae::expost
