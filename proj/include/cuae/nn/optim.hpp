#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cuae/nn/mlp.hpp"

namespace cuae::nn {

/// Bias-corrected Adam. Moment buffers are keyed by parameter name so a
/// checkpointed optimizer reattaches to the right tensors.
class Adam {
 public:
  struct Moments {
    Matrix m, v;
  };

  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update over all parameters. Throws std::runtime_error naming the
  /// parameter on any non-finite gradient.
  void step(const std::vector<ParamRef>& params,
            const std::vector<Matrix>& grads, double lr);

  int64_t step_count() const { return t_; }

  // Checkpoint access.
  const std::map<std::string, Moments>& moments() const { return state_; }
  void restore(std::map<std::string, Moments> state, int64_t step_count) {
    state_ = std::move(state);
    t_ = step_count;
  }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

 private:
  double beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

/// Step-decay schedule: base halves once for each threshold in
/// {10, 15, 20, 25} that the (0-based) epoch index has reached.
double lr_schedule(int epoch, double base_lr);

}  // namespace cuae::nn
