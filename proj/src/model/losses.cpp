#include "cuae/model/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cuae::model {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// NLL of one trajectory under N(y, sigma^2 I) over all T*2 coordinates.
double traj_nll_iso(const Trajectory& t, const Trajectory& y, double sigma) {
  const double n_coord = 2.0 * static_cast<double>(y.rows());
  const double sq = (t - y).squaredNorm();
  return n_coord * (0.5 * kLog2Pi + std::log(sigma)) +
         sq / (2.0 * sigma * sigma);
}

void check_rec_inputs(const std::vector<Trajectory>& decoded,
                      const Trajectory& y, double sigma) {
  if (decoded.empty())
    throw std::invalid_argument("reconstruction loss: no decoded trajectories");
  if (sigma <= 0.0)
    throw std::invalid_argument("reconstruction loss: sigma must be positive");
  for (const Trajectory& t : decoded)
    if (t.rows() != y.rows())
      throw std::invalid_argument(
          "reconstruction loss: trajectory length mismatch");
}

}  // namespace

double loss_rec_samples(const std::vector<Trajectory>& decoded,
                        const Trajectory& y, double sigma) {
  check_rec_inputs(decoded, y, sigma);
  double acc = 0.0;
  for (const Trajectory& t : decoded) acc += traj_nll_iso(t, y, sigma);
  return acc / static_cast<double>(decoded.size());
}

double loss_rec_dist(const std::vector<Trajectory>& decoded,
                     const Trajectory& y, double sigma) {
  check_rec_inputs(decoded, y, sigma);
  Trajectory mean = Trajectory::Zero(y.rows(), 2);
  for (const Trajectory& t : decoded) mean += t;
  mean /= static_cast<double>(decoded.size());
  return traj_nll_iso(mean, y, sigma);
}

double loss_kl_gmm(const LatentEncoding& post, const LatentEncoding& prior) {
  if (post.size() != prior.size())
    throw std::invalid_argument("loss_kl_gmm: component count mismatch (" +
                                std::to_string(post.size()) + " vs " +
                                std::to_string(prior.size()) + ")");
  double acc = 0.0;
  for (int c = 0; c < post.size(); ++c)
    acc += gauss::kl_diag(post.comps[c], prior.comps[c]);
  acc += gauss::kl_discrete(gauss::DiscreteDist(post.weights),
                            gauss::DiscreteDist(prior.weights));
  return acc;
}

int gmm_winner(const std::vector<Trajectory>& centroids, const Trajectory& y) {
  if (centroids.empty())
    throw std::invalid_argument("gmm_winner: no centroids");
  int best = 0;
  double best_ade = std::numeric_limits<double>::infinity();
  for (int c = 0; c < static_cast<int>(centroids.size()); ++c) {
    if (centroids[c].rows() != y.rows())
      throw std::invalid_argument("gmm_winner: trajectory length mismatch");
    const double ade = (centroids[c] - y).rowwise().norm().mean();
    if (ade < best_ade) {
      best_ade = ade;
      best = c;
    }
  }
  return best;
}

double loss_rec_gmm(const OutputGmm& out, const Trajectory& y,
                    const gauss::DiscreteDist& w_phi) {
  if (out.size() == 0) throw std::invalid_argument("loss_rec_gmm: empty mixture");
  if (w_phi.size() != out.size())
    throw std::invalid_argument("loss_rec_gmm: weight count mismatch");
  const int winner = gmm_winner(out.centroids, y);
  const Trajectory& mu = out.centroids[winner];
  const auto& covs = out.step_covs[winner];
  if (static_cast<int>(covs.size()) != y.rows())
    throw std::invalid_argument("loss_rec_gmm: covariance count mismatch");

  double nll = 0.0;
  for (int t = 0; t < y.rows(); ++t) {
    const Eigen::Matrix2d& s = covs[t];
    const double det = s(0, 0) * s(1, 1) - s(0, 1) * s(1, 0);
    if (det <= 0.0)
      throw std::invalid_argument("loss_rec_gmm: singular covariance at step " +
                                  std::to_string(t));
    const double rx = y(t, 0) - mu(t, 0);
    const double ry = y(t, 1) - mu(t, 1);
    const double quad =
        (s(1, 1) * rx * rx - 2.0 * s(0, 1) * rx * ry + s(0, 0) * ry * ry) / det;
    nll += kLog2Pi + 0.5 * (std::log(det) + quad);
  }

  Eigen::VectorXd one_hot = Eigen::VectorXd::Zero(out.size());
  one_hot[winner] = 1.0;
  return nll + gauss::kl_discrete(gauss::DiscreteDist(one_hot), w_phi);
}

}  // namespace cuae::model
