#pragma once

#include <functional>
#include <string>
#include <vector>

#include "alcr/tensor.hpp"

namespace alcr::autodiff {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Per-forward-pass recording of operations over Tensors. Built fresh for each
/// minibatch; backward() walks the record in reverse creation order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Named differentiable leaf (a model parameter). Copies the value.
  Var leaf(const Tensor& value, const std::string& name);
  /// Non-differentiable input (features, masks, ...).
  Var constant(Tensor value);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }
  void clear();

  // --- recorded ops ---
  Var add(Var a, Var b);
  /// [R,C] + [C], broadcasting the row over all rows.
  Var add_row(Var m, Var row);
  Var mul(Var a, Var b);
  /// Elementwise a*v + b with constant coefficients.
  Var affine(Var v, double a, double b);
  Var scale(Var v, double a) { return affine(v, a, 0.0); }
  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  /// Rank-1 concatenation.
  Var concat(Var a, Var b);
  /// Stacks rank-1 vars of equal length into a matrix, one per row.
  Var stack_rows(const std::vector<Var>& rows);
  Var slice_row(Var m, int row);
  Var slice_range(Var v, int begin, int end);
  Var reshape(Var v, std::vector<int> shape);
  Var tanh_op(Var v);
  Var sigmoid_op(Var v);
  Var log_op(Var v);
  /// Rank-1 softmax (attention weights).
  Var softmax(Var v);
  /// Row-wise log-softmax with max-subtraction; rank 1 or 2.
  Var log_softmax(Var v);
  /// Rows of `table` selected by token id.
  Var embedding(Var table, const std::vector<int>& ids);
  /// Sum of -logp[l, target[l]] over rows; logp rank 2 (or rank 1 with one id).
  Var nll(Var logp, const std::vector<int>& targets);
  Var sum(Var v);
  /// 1-D convolution with 'same' zero padding: signal [T], kernel [C,K] -> [T,C].
  Var conv1d(Var signal, Var kernel);
  /// Fused GRU cell. x_gates = x·W_in + b_in precomputed, layout [r|z|n].
  Var gru_step(Var x_gates, Var h_prev, Var w_rec, Var b_rec);
  /// Fused LSTM cell. x_gates layout [i|f|g|o]; state and result are [h|c].
  Var lstm_step(Var x_gates, Var hc_prev, Var w_rec, Var b_rec);

  /// Reverse pass from a scalar loss; returns dLoss/dθ for every named leaf
  /// (zero tensors for leaves the loss does not reach).
  Gradients backward(Var loss);

 private:
  friend struct TapeOps;
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    int leaf_index = -1;  // into leaf_names_
    std::function<void(Tape&)> backprop;
  };

  int new_node(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop);
  Var as_var(int id) { return Var{this, id}; }
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  const Tensor& value_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].value;
  }
  bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

  std::vector<Node> nodes_;
  std::vector<std::string> leaf_names_;
  std::vector<int> leaf_ids_;
};

/// Declares every parameter of a store as a leaf on the tape.
struct TapeParams {
  std::map<std::string, Var> vars;
  Var at(const std::string& name) const;
};
TapeParams watch_parameters(Tape& tape, const ParameterStore& params);

}  // namespace alcr::autodiff
