#include "cuae/gauss/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cuae::gauss {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
}

DiagGaussian::DiagGaussian(Eigen::VectorXd m, Eigen::VectorXd lv)
    : mean(std::move(m)), log_var(std::move(lv)) {
  if (mean.size() != log_var.size())
    throw std::invalid_argument("DiagGaussian: mean and log_var sizes differ");
}

DiagGaussian DiagGaussian::standard(int n) {
  return DiagGaussian(Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n));
}

void GaussianMixture::validate() const {
  if (components.empty())
    throw std::invalid_argument("GaussianMixture: no components");
  if (weights.size() != size())
    throw std::invalid_argument("GaussianMixture: weight count != component count");
  if ((weights.array() < 0.0).any())
    throw std::invalid_argument("GaussianMixture: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("GaussianMixture: weights sum to " +
                                std::to_string(weights.sum()));
  const int d = dim();
  for (int c = 0; c < size(); ++c) {
    const auto& g = components[c];
    if (g.dim() != d || g.cov.rows() != d || g.cov.cols() != d)
      throw std::invalid_argument("GaussianMixture: component " +
                                  std::to_string(c) + " has inconsistent shape");
  }
}

DiscreteDist::DiscreteDist(Eigen::VectorXd p) : probs(std::move(p)) {
  if ((probs.array() < 0.0).any())
    throw std::invalid_argument("DiscreteDist: negative probability");
  if (probs.size() > 0 && std::abs(probs.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("DiscreteDist: probabilities sum to " +
                                std::to_string(probs.sum()));
}

double log_density_diag(const DiagGaussian& g, const Eigen::VectorXd& z) {
  if (z.size() != g.dim())
    throw std::invalid_argument("log_density_diag: point dimension mismatch");
  const Eigen::ArrayXd r = (z - g.mean).array();
  const Eigen::ArrayXd lv = g.log_var.array();
  return (-0.5 * kLog2Pi - 0.5 * lv - 0.5 * r.square() * (-lv).exp()).sum();
}

double log_density_full(const FullGaussian& g, const Eigen::VectorXd& z) {
  if (z.size() != g.dim())
    throw std::invalid_argument("log_density_full: point dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("log_density_full: covariance not positive definite");
  const Eigen::VectorXd u = llt.matrixL().solve(z - g.mean);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * (g.dim() * kLog2Pi + log_det + u.squaredNorm());
}

double kl_diag(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("kl_diag: dimension mismatch");
  const Eigen::ArrayXd lvq = q.log_var.array();
  const Eigen::ArrayXd lvp = p.log_var.array();
  const Eigen::ArrayXd dmu = (q.mean - p.mean).array();
  // Variance ratio as exp of the log difference so q == p cancels exactly.
  return (0.5 * (lvp - lvq) + 0.5 * (lvq - lvp).exp() +
          dmu.square() * 0.5 * (-lvp).exp() - 0.5)
      .sum();
}

double kl_discrete(const DiscreteDist& q, const DiscreteDist& p) {
  if (q.size() != p.size())
    throw std::invalid_argument("kl_discrete: size mismatch");
  double kl = 0.0;
  for (int c = 0; c < q.size(); ++c) {
    const double qc = q.probs[c];
    if (qc <= 0.0) continue;  // 0 * log(0/p) = 0
    const double pc = p.probs[c];
    if (pc <= 0.0)
      throw std::invalid_argument(
          "kl_discrete: q places mass on category " + std::to_string(c) +
          " where p has none");
    kl += qc * std::log(qc / pc);
  }
  return kl;
}

double mixture_log_density(const GaussianMixture& m, const Eigen::VectorXd& z) {
  m.validate();
  if (z.size() != m.dim())
    throw std::invalid_argument("mixture_log_density: point dimension mismatch");
  std::vector<double> terms;
  terms.reserve(m.size());
  for (int c = 0; c < m.size(); ++c) {
    const double w = m.weights[c];
    if (w <= 0.0) continue;
    double lc;
    try {
      lc = log_density_full(m.components[c], z);
    } catch (const std::runtime_error&) {
      throw std::runtime_error("mixture_log_density: component " +
                               std::to_string(c) +
                               " covariance not positive definite");
    }
    terms.push_back(std::log(w) + lc);
  }
  if (terms.empty())
    throw std::invalid_argument("mixture_log_density: all weights are zero");
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc);
}

Eigen::VectorXd sample_mixture(const GaussianMixture& m, std::mt19937_64& rng) {
  m.validate();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double r = unif(rng) * m.weights.sum();
  int pick = m.size() - 1;
  double acc = 0.0;
  for (int c = 0; c < m.size(); ++c) {
    acc += m.weights[c];
    if (r < acc) {
      pick = c;
      break;
    }
  }
  const auto& g = m.components[pick];
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_mixture: component " +
                             std::to_string(pick) +
                             " covariance not positive definite");
  Eigen::VectorXd u(g.dim());
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < g.dim(); ++i) u[i] = gauss(rng);
  return g.mean + llt.matrixL() * u;
}

}  // namespace cuae::gauss
