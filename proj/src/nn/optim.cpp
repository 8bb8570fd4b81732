#include "cuae/nn/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace cuae::nn {

void Adam::step(const std::vector<ParamRef>& params,
                const std::vector<Matrix>& grads, double lr) {
  if (params.size() != grads.size())
    throw std::invalid_argument("Adam::step: " + std::to_string(params.size()) +
                                " params vs " + std::to_string(grads.size()) +
                                " grads");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (!g.allFinite())
      throw std::runtime_error("Adam::step: non-finite gradient for " +
                               params[i].name);
    Matrix& p = *params[i].tensor;
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw std::invalid_argument("Adam::step: gradient shape mismatch for " +
                                  params[i].name);
    auto [it, fresh] = state_.try_emplace(params[i].name);
    Moments& mom = it->second;
    if (fresh) {
      mom.m = Matrix::Zero(p.rows(), p.cols());
      mom.v = Matrix::Zero(p.rows(), p.cols());
    }
    mom.m = beta1_ * mom.m + (1.0 - beta1_) * g;
    mom.v = beta2_ * mom.v + (1.0 - beta2_) * g.cwiseProduct(g);
    const Matrix m_hat = mom.m / bc1;
    const Matrix v_hat = mom.v / bc2;
    p.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps_);
  }
}

double lr_schedule(int epoch, double base_lr) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  int halvings = 0;
  for (int threshold : {10, 15, 20, 25})
    if (threshold <= epoch) ++halvings;
  return base_lr * std::pow(0.5, halvings);
}

}  // namespace cuae::nn
