#include "cuae/nn/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace cuae::nn {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_of(a) + " vs " + shape_of(b));
}

}  // namespace

Tape::Node& Tape::node(NodeId id) {
  if (id < 0 || id >= size()) throw std::out_of_range("tape: bad node id");
  return nodes_[id];
}

const Tape::Node& Tape::node(NodeId id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("tape: bad node id");
  return nodes_[id];
}

NodeId Tape::leaf(Matrix value, bool needs_grad) {
  return push(std::move(value), needs_grad, nullptr);
}

const Matrix& Tape::grad(NodeId id) const {
  const Node& n = node(id);
  if (!n.needs_grad)
    throw std::logic_error("tape: gradient requested for a constant node");
  if (!swept_) throw std::logic_error("tape: backward() has not run");
  return n.grad;
}

void Tape::clear() {
  nodes_.clear();
  swept_ = false;
}

NodeId Tape::push(Matrix value, bool needs_grad,
                  std::function<void(Tape&, const Matrix&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) {
    n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(n));
  return size() - 1;
}

void Tape::accum(NodeId id, const Matrix& g) {
  Node& n = nodes_[id];
  if (n.needs_grad) n.grad += g;
}

void Tape::accum_block(NodeId id, int row, int col, const Matrix& g) {
  Node& n = nodes_[id];
  if (n.needs_grad) n.grad.block(row, col, g.rows(), g.cols()) += g;
}

void Tape::backward(NodeId loss) {
  const Node& root = node(loss);
  if (root.value.rows() != 1 || root.value.cols() != 1)
    throw std::invalid_argument("tape: backward root must be 1x1, got " +
                                shape_of(root.value));
  if (!root.needs_grad)
    throw std::logic_error("tape: backward root does not depend on any "
                           "gradient-tracked node");
  if (swept_) throw std::logic_error("tape: backward already ran");
  swept_ = true;
  nodes_[loss].grad(0, 0) = 1.0;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.backprop) n.backprop(*this, n.grad);
  }
}

// ---- ops ------------------------------------------------------------

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.rows())
    throw std::invalid_argument("matmul: inner dimensions " + shape_of(va) +
                                " * " + shape_of(vb));
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(va * vb, ng, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a))
      t.nodes_[a].grad.noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b))
      t.nodes_[b].grad.noalias() += t.value(a).transpose() * g;
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "add");
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(value(a) + value(b), ng, [a, b](Tape& t, const Matrix& g) {
    t.accum(a, g);
    t.accum(b, g);
  });
}

NodeId Tape::sub(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "sub");
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(value(a) - value(b), ng, [a, b](Tape& t, const Matrix& g) {
    t.accum(a, g);
    t.accum(b, -g);
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "mul");
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(value(a).cwiseProduct(value(b)), ng,
              [a, b](Tape& t, const Matrix& g) {
                if (t.needs_grad(a))
                  t.nodes_[a].grad += g.cwiseProduct(t.value(b));
                if (t.needs_grad(b))
                  t.nodes_[b].grad += g.cwiseProduct(t.value(a));
              });
}

NodeId Tape::div(NodeId a, NodeId b) {
  require_same_shape(value(a), value(b), "div");
  const bool ng = needs_grad(a) || needs_grad(b);
  return push(value(a).cwiseQuotient(value(b)), ng,
              [a, b](Tape& t, const Matrix& g) {
                const Matrix& vb = t.value(b);
                if (t.needs_grad(a)) t.nodes_[a].grad += g.cwiseQuotient(vb);
                if (t.needs_grad(b))
                  t.nodes_[b].grad -= g.cwiseProduct(t.value(a))
                                          .cwiseQuotient(vb.cwiseProduct(vb));
              });
}

NodeId Tape::add_bias(NodeId x, NodeId b) {
  const Matrix& vx = value(x);
  const Matrix& vb = value(b);
  if (vb.cols() != 1 || vb.rows() != vx.rows())
    throw std::invalid_argument("add_bias: bias " + shape_of(vb) +
                                " does not match input " + shape_of(vx));
  Matrix v = vx.colwise() + vb.col(0);
  const bool ng = needs_grad(x) || needs_grad(b);
  return push(std::move(v), ng, [x, b](Tape& t, const Matrix& g) {
    t.accum(x, g);
    if (t.needs_grad(b)) t.nodes_[b].grad += g.rowwise().sum();
  });
}

NodeId Tape::mul_colvec(NodeId x, NodeId v) {
  const Matrix& vx = value(x);
  const Matrix& vv = value(v);
  if (vv.cols() != 1 || vv.rows() != vx.rows())
    throw std::invalid_argument("mul_colvec: vector " + shape_of(vv) +
                                " does not match input " + shape_of(vx));
  Matrix out = (vx.array().colwise() * vv.col(0).array()).matrix();
  const bool ng = needs_grad(x) || needs_grad(v);
  return push(std::move(out), ng, [x, v](Tape& t, const Matrix& g) {
    if (t.needs_grad(x))
      t.nodes_[x].grad +=
          (g.array().colwise() * t.value(v).col(0).array()).matrix();
    if (t.needs_grad(v))
      t.nodes_[v].grad += g.cwiseProduct(t.value(x)).rowwise().sum();
  });
}

NodeId Tape::add_rowvec(NodeId x, NodeId r) {
  const Matrix& vx = value(x);
  const Matrix& vr = value(r);
  if (vr.rows() != 1 || vr.cols() != vx.cols())
    throw std::invalid_argument("add_rowvec: vector " + shape_of(vr) +
                                " does not match input " + shape_of(vx));
  Matrix v = vx.rowwise() + vr.row(0);
  const bool ng = needs_grad(x) || needs_grad(r);
  return push(std::move(v), ng, [x, r](Tape& t, const Matrix& g) {
    t.accum(x, g);
    if (t.needs_grad(r)) t.nodes_[r].grad += g.colwise().sum();
  });
}

NodeId Tape::scale(NodeId a, double s) {
  return push(value(a) * s, needs_grad(a),
              [a, s](Tape& t, const Matrix& g) { t.accum(a, g * s); });
}

NodeId Tape::add_scalar(NodeId a, double c) {
  Matrix v = (value(a).array() + c).matrix();
  return push(std::move(v), needs_grad(a),
              [a](Tape& t, const Matrix& g) { t.accum(a, g); });
}

NodeId Tape::relu(NodeId a) {
  return push(value(a).cwiseMax(0.0), needs_grad(a),
              [a](Tape& t, const Matrix& g) {
                if (!t.needs_grad(a)) return;
                t.nodes_[a].grad += ((t.value(a).array() > 0.0).cast<double>() *
                                     g.array())
                                        .matrix();
              });
}

NodeId Tape::exp(NodeId a) {
  const NodeId self = size();
  Matrix v = value(a).array().exp().matrix();
  return push(std::move(v), needs_grad(a),
              [a, self](Tape& t, const Matrix& g) {
                // d exp(x) = exp(x) dx, and exp(x) is this node's own value.
                if (t.needs_grad(a))
                  t.nodes_[a].grad += g.cwiseProduct(t.value(self));
              });
}

NodeId Tape::log(NodeId a) {
  const Matrix& va = value(a);
  if ((va.array() <= 0.0).any())
    throw std::domain_error("log: non-positive input");
  Matrix v = va.array().log().matrix();
  return push(std::move(v), needs_grad(a), [a](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.nodes_[a].grad += g.cwiseQuotient(t.value(a));
  });
}

NodeId Tape::sum_all(NodeId a) {
  Matrix v(1, 1);
  v(0, 0) = value(a).sum();
  return push(std::move(v), needs_grad(a), [a](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.nodes_[a].grad.array() += g(0, 0);
  });
}

NodeId Tape::colwise_sum(NodeId a) {
  return push(value(a).colwise().sum(), needs_grad(a),
              [a](Tape& t, const Matrix& g) {
                if (!t.needs_grad(a)) return;
                t.nodes_[a].grad.array() +=
                    g.array().replicate(t.value(a).rows(), 1);
              });
}

NodeId Tape::repeat_cols(NodeId a, int k) {
  if (k < 1) throw std::invalid_argument("repeat_cols: k must be positive");
  const Matrix& va = value(a);
  Matrix v(va.rows(), va.cols() * k);
  for (int c = 0; c < va.cols(); ++c)
    for (int i = 0; i < k; ++i) v.col(c * k + i) = va.col(c);
  return push(std::move(v), needs_grad(a), [a, k](Tape& t, const Matrix& g) {
    if (!t.needs_grad(a)) return;
    Matrix& ga = t.nodes_[a].grad;
    for (int c = 0; c < ga.cols(); ++c)
      ga.col(c) += g.middleCols(c * k, k).rowwise().sum();
  });
}

NodeId Tape::group_mean_cols(NodeId a, int k) {
  const Matrix& va = value(a);
  if (k < 1 || va.cols() % k != 0)
    throw std::invalid_argument("group_mean_cols: " +
                                std::to_string(va.cols()) +
                                " columns do not split into groups of " +
                                std::to_string(k));
  const int groups = static_cast<int>(va.cols()) / k;
  Matrix v(va.rows(), groups);
  for (int c = 0; c < groups; ++c)
    v.col(c) = va.middleCols(c * k, k).rowwise().sum() / k;
  return push(std::move(v), needs_grad(a), [a, k](Tape& t, const Matrix& g) {
    if (!t.needs_grad(a)) return;
    Matrix& ga = t.nodes_[a].grad;
    for (int c = 0; c < g.cols(); ++c)
      ga.middleCols(c * k, k).colwise() += (g.col(c) / k).eval();
  });
}

NodeId Tape::rows(NodeId a, int first, int count) {
  const Matrix& va = value(a);
  if (first < 0 || count < 0 || first + count > va.rows())
    throw std::invalid_argument("rows: slice [" + std::to_string(first) +
                                ", +" + std::to_string(count) +
                                ") out of range for " + shape_of(va));
  return push(va.middleRows(first, count), needs_grad(a),
              [a, first](Tape& t, const Matrix& g) {
                t.accum_block(a, first, 0, g);
              });
}

NodeId Tape::cols(NodeId a, int first, int count) {
  const Matrix& va = value(a);
  if (first < 0 || count < 0 || first + count > va.cols())
    throw std::invalid_argument("cols: slice [" + std::to_string(first) +
                                ", +" + std::to_string(count) +
                                ") out of range for " + shape_of(va));
  return push(va.middleCols(first, count), needs_grad(a),
              [a, first](Tape& t, const Matrix& g) {
                t.accum_block(a, 0, first, g);
              });
}

NodeId Tape::vcat(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.cols() != vb.cols())
    throw std::invalid_argument("vcat: column mismatch " + shape_of(va) +
                                " vs " + shape_of(vb));
  Matrix v(va.rows() + vb.rows(), va.cols());
  v.topRows(va.rows()) = va;
  v.bottomRows(vb.rows()) = vb;
  const bool ng = needs_grad(a) || needs_grad(b);
  const int ra = static_cast<int>(va.rows());
  return push(std::move(v), ng, [a, b, ra](Tape& t, const Matrix& g) {
    t.accum(a, g.topRows(ra));
    t.accum(b, g.bottomRows(g.rows() - ra));
  });
}

NodeId Tape::hcat(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows() != vb.rows())
    throw std::invalid_argument("hcat: row mismatch " + shape_of(va) +
                                " vs " + shape_of(vb));
  Matrix v(va.rows(), va.cols() + vb.cols());
  v.leftCols(va.cols()) = va;
  v.rightCols(vb.cols()) = vb;
  const bool ng = needs_grad(a) || needs_grad(b);
  const int ca = static_cast<int>(va.cols());
  return push(std::move(v), ng, [a, b, ca](Tape& t, const Matrix& g) {
    t.accum(a, g.leftCols(ca));
    t.accum(b, g.rightCols(g.cols() - ca));
  });
}

NodeId Tape::cumsum_down(NodeId a) {
  Matrix v = value(a);
  for (int i = 1; i < v.rows(); ++i) v.row(i) += v.row(i - 1);
  return push(std::move(v), needs_grad(a), [a](Tape& t, const Matrix& g) {
    if (!t.needs_grad(a)) return;
    Matrix rg = g;  // suffix sums: input row i feeds every output row >= i
    for (int i = static_cast<int>(rg.rows()) - 2; i >= 0; --i)
      rg.row(i) += rg.row(i + 1);
    t.nodes_[a].grad += rg;
  });
}

NodeId Tape::softmax_cols(NodeId a) {
  const Matrix& va = value(a);
  Matrix v(va.rows(), va.cols());
  for (int c = 0; c < va.cols(); ++c) {
    const Eigen::ArrayXd e = (va.col(c).array() - va.col(c).maxCoeff()).exp();
    v.col(c) = (e / e.sum()).matrix();
  }
  const NodeId self = size();
  return push(std::move(v), needs_grad(a),
              [a, self](Tape& t, const Matrix& g) {
                if (!t.needs_grad(a)) return;
                const Matrix& y = t.value(self);
                Matrix& ga = t.nodes_[a].grad;
                for (int c = 0; c < g.cols(); ++c) {
                  const double dot = g.col(c).dot(y.col(c));
                  ga.col(c) +=
                      y.col(c).cwiseProduct((g.col(c).array() - dot).matrix());
                }
              });
}

NodeId Tape::select_row_per_col(NodeId a, std::vector<int> row_per_col) {
  const Matrix& va = value(a);
  if (static_cast<int>(row_per_col.size()) != va.cols())
    throw std::invalid_argument(
        "select_row_per_col: need one row index per column");
  Matrix v(1, va.cols());
  for (int c = 0; c < va.cols(); ++c) {
    const int r = row_per_col[c];
    if (r < 0 || r >= va.rows())
      throw std::invalid_argument("select_row_per_col: row " +
                                  std::to_string(r) + " out of range");
    v(0, c) = va(r, c);
  }
  return push(std::move(v), needs_grad(a),
              [a, rows = std::move(row_per_col)](Tape& t, const Matrix& g) {
                if (!t.needs_grad(a)) return;
                Matrix& ga = t.nodes_[a].grad;
                for (int c = 0; c < g.cols(); ++c) ga(rows[c], c) += g(0, c);
              });
}

NodeId Tape::sigma_expand(NodeId mu, NodeId log_var,
                          const std::vector<std::vector<int>>& axes_per_col) {
  const Matrix& vm = value(mu);
  const Matrix& vl = value(log_var);
  require_same_shape(vm, vl, "sigma_expand");
  const int n = static_cast<int>(vm.rows());
  const int cols = static_cast<int>(vm.cols());
  if (static_cast<int>(axes_per_col.size()) != cols)
    throw std::invalid_argument("sigma_expand: need an axis list per column");
  const int m =
      axes_per_col.empty() ? 0 : static_cast<int>(axes_per_col[0].size());
  for (const auto& ax : axes_per_col) {
    if (static_cast<int>(ax.size()) != m)
      throw std::invalid_argument("sigma_expand: ragged axis lists");
    for (int j : ax)
      if (j < 0 || j >= n)
        throw std::invalid_argument("sigma_expand: axis out of range");
  }
  const int k = 1 + 2 * m;
  const double root_n = std::sqrt(static_cast<double>(n));

  Matrix v(n, static_cast<Eigen::Index>(cols) * k);
  for (int b = 0; b < cols; ++b) {
    for (int i = 0; i < k; ++i) v.col(b * k + i) = vm.col(b);
    for (int i = 0; i < m; ++i) {
      const int j = axes_per_col[b][i];
      const double step = root_n * std::exp(0.5 * vl(j, b));
      v(j, b * k + 1 + i) += step;
      v(j, b * k + 1 + m + i) -= step;
    }
  }
  const bool ng = needs_grad(mu) || needs_grad(log_var);
  return push(
      std::move(v), ng,
      [mu, log_var, axes_per_col, k, m, root_n](Tape& t, const Matrix& g) {
        const Matrix& vl = t.value(log_var);
        const bool gm = t.needs_grad(mu);
        const bool gl = t.needs_grad(log_var);
        for (int b = 0; b < static_cast<int>(axes_per_col.size()); ++b) {
          if (gm)
            t.nodes_[mu].grad.col(b) += g.middleCols(b * k, k).rowwise().sum();
          if (!gl) continue;
          for (int i = 0; i < m; ++i) {
            const int j = axes_per_col[b][i];
            const double dstep = g(j, b * k + 1 + i) - g(j, b * k + 1 + m + i);
            t.nodes_[log_var].grad(j, b) +=
                dstep * 0.5 * root_n * std::exp(0.5 * vl(j, b));
          }
        }
      });
}

NodeId Tape::batchnorm_train(NodeId x, NodeId gamma, NodeId beta, double eps) {
  const Matrix& vx = value(x);
  const Matrix& vg = value(gamma);
  const Matrix& vb = value(beta);
  if (vg.cols() != 1 || vb.cols() != 1 || vg.rows() != vx.rows() ||
      vb.rows() != vx.rows())
    throw std::invalid_argument(
        "batchnorm_train: gamma/beta must be (rows x 1)");
  if (vx.cols() < 2)
    throw std::invalid_argument("batchnorm_train: batch of " +
                                std::to_string(vx.cols()) +
                                " has no usable batch statistics");
  const int bsz = static_cast<int>(vx.cols());
  const Eigen::VectorXd mean = vx.rowwise().mean();
  Matrix centered = vx.colwise() - mean;
  const Eigen::VectorXd var =
      centered.cwiseProduct(centered).rowwise().sum() / bsz;
  const Eigen::VectorXd inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = (centered.array().colwise() * inv_std.array()).matrix();
  Matrix y = ((xhat.array().colwise() * vg.col(0).array()).colwise() +
              vb.col(0).array())
                 .matrix();

  const bool ng = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
  return push(std::move(y), ng,
              [x, gamma, beta, xhat = std::move(xhat), inv_std,
               bsz](Tape& t, const Matrix& g) {
                if (t.needs_grad(beta))
                  t.nodes_[beta].grad += g.rowwise().sum();
                if (t.needs_grad(gamma))
                  t.nodes_[gamma].grad += g.cwiseProduct(xhat).rowwise().sum();
                if (!t.needs_grad(x)) return;
                const Eigen::ArrayXd gv = t.value(gamma).col(0).array();
                Matrix dxhat = (g.array().colwise() * gv).matrix();
                const Eigen::VectorXd m1 = dxhat.rowwise().mean();
                const Eigen::VectorXd m2 =
                    dxhat.cwiseProduct(xhat).rowwise().sum() / bsz;
                Matrix dx = dxhat;
                dx.colwise() -= m1;
                dx -= (xhat.array().colwise() * m2.array()).matrix();
                t.nodes_[x].grad +=
                    (dx.array().colwise() * inv_std.array()).matrix();
              });
}

}  // namespace cuae::nn
