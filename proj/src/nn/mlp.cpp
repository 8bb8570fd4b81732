#include "cuae/nn/mlp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cuae::nn {

Mlp::Mlp(std::vector<int> widths, bool batchnorm)
    : widths_(std::move(widths)), batchnorm_(batchnorm) {
  if (widths_.size() < 2)
    throw std::invalid_argument("Mlp: need at least input and output widths");
  for (int w : widths_)
    if (w < 1) throw std::invalid_argument("Mlp: non-positive layer width");
  const int n_layers = static_cast<int>(widths_.size()) - 1;
  linear_.resize(n_layers);
  for (int l = 0; l < n_layers; ++l) {
    linear_[l].w = Matrix::Zero(widths_[l + 1], widths_[l]);
    linear_[l].b = Matrix::Zero(widths_[l + 1], 1);
  }
  if (batchnorm_) {
    bn_.resize(n_layers - 1);
    for (int l = 0; l + 1 < n_layers; ++l) {
      const int w = widths_[l + 1];
      bn_[l].gamma = Matrix::Ones(w, 1);
      bn_[l].beta = Matrix::Zero(w, 1);
      bn_[l].run_mean = Matrix::Zero(w, 1);
      bn_[l].run_var = Matrix::Ones(w, 1);
    }
  }
}

void Mlp::init_params(std::mt19937_64& rng) {
  for (auto& lin : linear_) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(lin.w.rows() + lin.w.cols()));
    std::uniform_real_distribution<double> unif(-limit, limit);
    for (Eigen::Index i = 0; i < lin.w.rows(); ++i)
      for (Eigen::Index j = 0; j < lin.w.cols(); ++j) lin.w(i, j) = unif(rng);
    lin.b.setZero();
  }
  for (auto& bn : bn_) {
    bn.gamma.setOnes();
    bn.beta.setZero();
    bn.run_mean.setZero();
    bn.run_var.setOnes();
  }
}

Mlp::Binding Mlp::lease(Tape& tape) const {
  Binding bind;
  for (const auto& lin : linear_) {
    bind.weight.push_back(tape.leaf(lin.w, true));
    bind.bias.push_back(tape.leaf(lin.b, true));
  }
  for (const auto& bn : bn_) {
    bind.gamma.push_back(tape.leaf(bn.gamma, true));
    bind.beta.push_back(tape.leaf(bn.beta, true));
  }
  return bind;
}

NodeId Mlp::forward(Tape& tape, const Binding& bind, NodeId x, bool train) {
  if (tape.value(x).rows() != in_dim())
    throw std::invalid_argument("Mlp::forward: input has " +
                                std::to_string(tape.value(x).rows()) +
                                " rows, expected " + std::to_string(in_dim()));
  NodeId h = x;
  const int n_layers = static_cast<int>(linear_.size());
  for (int l = 0; l < n_layers; ++l) {
    h = tape.add_bias(tape.matmul(bind.weight[l], h), bind.bias[l]);
    if (l == n_layers - 1) break;  // bare linear head
    if (batchnorm_) {
      if (train) {
        // Track running statistics from the same batch moments the op uses.
        const Matrix& pre = tape.value(h);
        const int bsz = static_cast<int>(pre.cols());
        const Eigen::VectorXd mean = pre.rowwise().mean();
        const Eigen::VectorXd var =
            ((pre.colwise() - mean).cwiseAbs2().rowwise().sum() / bsz);
        auto& bn = bn_[l];
        bn.run_mean = kBnMomentum * bn.run_mean + (1.0 - kBnMomentum) * mean;
        bn.run_var = kBnMomentum * bn.run_var + (1.0 - kBnMomentum) * var;
        h = tape.batchnorm_train(h, bind.gamma[l], bind.beta[l], kBnEps);
      } else {
        const auto& bn = bn_[l];
        const Matrix neg_mean = -bn.run_mean;
        const Matrix inv_std =
            (bn.run_var.array() + kBnEps).rsqrt().matrix();
        h = tape.add_bias(h, tape.leaf(neg_mean));
        h = tape.mul_colvec(h, tape.leaf(inv_std));
        h = tape.mul_colvec(h, bind.gamma[l]);
        h = tape.add_bias(h, bind.beta[l]);
      }
    }
    h = tape.relu(h);
  }
  return h;
}

Matrix Mlp::eval(const Matrix& x) const {
  if (x.rows() != in_dim())
    throw std::invalid_argument("Mlp::eval: input has " +
                                std::to_string(x.rows()) +
                                " rows, expected " + std::to_string(in_dim()));
  Matrix h = x;
  const int n_layers = static_cast<int>(linear_.size());
  for (int l = 0; l < n_layers; ++l) {
    h = (linear_[l].w * h).colwise() + linear_[l].b.col(0);
    if (l == n_layers - 1) break;
    if (batchnorm_) {
      // Affine form of eval-mode batch norm: y = scale * x + shift.
      const auto& bn = bn_[l];
      const Eigen::ArrayXd scale =
          (bn.run_var.col(0).array() + kBnEps).rsqrt() *
          bn.gamma.col(0).array();
      const Eigen::ArrayXd shift =
          bn.beta.col(0).array() - bn.run_mean.col(0).array() * scale;
      h = ((h.array().colwise() * scale).colwise() + shift).matrix();
    }
    h = h.cwiseMax(0.0);
  }
  return h;
}

std::vector<Matrix> Mlp::gradients(const Tape& tape,
                                   const Binding& bind) const {
  std::vector<Matrix> out;
  for (size_t l = 0; l < linear_.size(); ++l) {
    out.push_back(tape.grad(bind.weight[l]));
    out.push_back(tape.grad(bind.bias[l]));
  }
  for (size_t l = 0; l < bn_.size(); ++l) {
    out.push_back(tape.grad(bind.gamma[l]));
    out.push_back(tape.grad(bind.beta[l]));
  }
  return out;
}

void Mlp::collect_params(const std::string& prefix,
                         std::vector<ParamRef>& out) {
  for (size_t l = 0; l < linear_.size(); ++l) {
    out.push_back({prefix + ".w" + std::to_string(l), &linear_[l].w});
    out.push_back({prefix + ".b" + std::to_string(l), &linear_[l].b});
  }
  for (size_t l = 0; l < bn_.size(); ++l) {
    out.push_back({prefix + ".bn" + std::to_string(l) + ".gamma",
                   &bn_[l].gamma});
    out.push_back({prefix + ".bn" + std::to_string(l) + ".beta",
                   &bn_[l].beta});
  }
}

void Mlp::collect_buffers(const std::string& prefix,
                          std::vector<ParamRef>& out) {
  for (size_t l = 0; l < bn_.size(); ++l) {
    out.push_back({prefix + ".bn" + std::to_string(l) + ".run_mean",
                   &bn_[l].run_mean});
    out.push_back({prefix + ".bn" + std::to_string(l) + ".run_var",
                   &bn_[l].run_var});
  }
}

NodeId reparam_sample(Tape& tape, NodeId mu, NodeId log_var, NodeId eps) {
  const NodeId std_dev = tape.exp(tape.scale(log_var, 0.5));
  return tape.add(mu, tape.mul(std_dev, eps));
}

}  // namespace cuae::nn
