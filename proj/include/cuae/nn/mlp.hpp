#pragma once

#include <random>
#include <string>
#include <vector>

#include "cuae/nn/tape.hpp"

namespace cuae::nn {

/// Named view of one parameter (or buffer) tensor, for the optimizer and the
/// checkpoint writer. Names are stable across runs.
struct ParamRef {
  std::string name;
  Matrix* tensor;
};

/// Dense stack: Linear -> [BatchNorm] -> ReLU on each hidden layer, bare
/// Linear output. widths = {in, hidden..., out}.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> widths, bool batchnorm);

  /// Glorot-uniform weights (fixed element order), zero biases, unit gamma.
  void init_params(std::mt19937_64& rng);

  int in_dim() const { return widths_.front(); }
  int out_dim() const { return widths_.back(); }
  bool has_batchnorm() const { return batchnorm_; }

  /// Tape leaves for every trainable tensor, in declaration order.
  struct Binding {
    std::vector<NodeId> weight, bias, gamma, beta;
  };
  Binding lease(Tape& tape) const;

  /// Forward through the tape. In train mode batch norm uses batch
  /// statistics and updates the running ones (momentum 0.9); in eval mode it
  /// normalizes with the stored running statistics.
  NodeId forward(Tape& tape, const Binding& bind, NodeId x, bool train);

  /// Pure eval-mode forward, no tape, no state mutation.
  Matrix eval(const Matrix& x) const;

  /// Pull gradients for every trainable tensor, aligned with params().
  std::vector<Matrix> gradients(const Tape& tape, const Binding& bind) const;

  void collect_params(const std::string& prefix, std::vector<ParamRef>& out);
  void collect_buffers(const std::string& prefix, std::vector<ParamRef>& out);

 private:
  struct Linear {
    Matrix w;  // (out x in)
    Matrix b;  // (out x 1)
  };
  struct BatchNorm {
    Matrix gamma, beta;          // (width x 1)
    Matrix run_mean, run_var;    // (width x 1)
  };

  std::vector<int> widths_;
  bool batchnorm_ = false;
  std::vector<Linear> linear_;
  std::vector<BatchNorm> bn_;  // one per hidden layer when enabled

  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnMomentum = 0.9;
};

/// z = mu + exp(log_var / 2) * eps, elementwise; gradients flow into mu and
/// log_var, eps is a constant draw.
NodeId reparam_sample(Tape& tape, NodeId mu, NodeId log_var, NodeId eps);

}  // namespace cuae::nn
