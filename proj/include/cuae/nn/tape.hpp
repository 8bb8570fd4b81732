#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace cuae::nn {

using Matrix = Eigen::MatrixXd;
using NodeId = int;

/// Append-only reverse-mode tape over matrix values. Columns are the batch
/// axis throughout: a (d x B) value holds d features for B scenes (or B*K
/// decoded samples). Creation order is topological order, so the backward
/// sweep is a single reverse pass. One backward per tape; rebuild per step.
class Tape {
 public:
  /// New input node. Gradients are only tracked (and only accumulate into)
  /// nodes created with needs_grad or downstream of one.
  NodeId leaf(Matrix value, bool needs_grad = false);

  const Matrix& value(NodeId id) const { return node(id).value; }
  /// Gradient of the last backward()'s scalar root w.r.t. this node.
  const Matrix& grad(NodeId id) const;
  bool needs_grad(NodeId id) const { return node(id).needs_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }
  void clear();

  /// Seed d(loss)/d(loss) = 1 and sweep the tape in reverse. `loss` must be
  /// 1x1. Call once per tape.
  void backward(NodeId loss);

  // ---- ops ----------------------------------------------------------
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);        // same shape
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);        // elementwise
  NodeId div(NodeId a, NodeId b);        // elementwise
  NodeId add_bias(NodeId x, NodeId b);   // b: (r x 1), broadcast over columns
  NodeId mul_colvec(NodeId x, NodeId v); // v: (r x 1), broadcast over columns
  NodeId add_rowvec(NodeId x, NodeId r); // r: (1 x c), broadcast over rows
  NodeId scale(NodeId a, double s);
  NodeId add_scalar(NodeId a, double c);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId log(NodeId a);                  // requires strictly positive values
  NodeId sum_all(NodeId a);              // -> 1x1
  NodeId colwise_sum(NodeId a);          // -> 1 x c
  NodeId repeat_cols(NodeId a, int k);   // each column repeated k times
  NodeId group_mean_cols(NodeId a, int k);  // mean over consecutive groups of k
  NodeId rows(NodeId a, int first, int count);
  NodeId cols(NodeId a, int first, int count);
  NodeId vcat(NodeId a, NodeId b);
  NodeId hcat(NodeId a, NodeId b);
  NodeId cumsum_down(NodeId a);          // prefix sums along each column
  NodeId softmax_cols(NodeId a);
  /// y(0, j) = a(row_per_col[j], j); picks one row per column.
  NodeId select_row_per_col(NodeId a, std::vector<int> row_per_col);

  /// Sigma-point expansion of per-column diagonal Gaussians. For column b of
  /// (mu, log_var) emit 1 + 2m columns laid out [center, +axes..., -axes...],
  /// stepping sqrt(n * var_j) along each chosen axis j (n = full row count,
  /// independent of how many axes were kept). Every column must select the
  /// same number of axes.
  NodeId sigma_expand(NodeId mu, NodeId log_var,
                      const std::vector<std::vector<int>>& axes_per_col);

  /// Batch normalization in training mode: per-row batch statistics.
  NodeId batchnorm_train(NodeId x, NodeId gamma, NodeId beta, double eps);

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated (zero) only when needs_grad
    std::function<void(Tape&, const Matrix&)> backprop;
    bool needs_grad = false;
  };

  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  NodeId push(Matrix value, bool needs_grad,
              std::function<void(Tape&, const Matrix&)> backprop);
  /// Accumulate into a parent's gradient, skipping constant subgraphs.
  void accum(NodeId id, const Matrix& g);
  void accum_block(NodeId id, int row, int col, const Matrix& g);

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace cuae::nn
