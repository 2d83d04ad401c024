#pragma once

#include <functional>
#include <string>
#include <vector>

#include "amod/tensor.hpp"

namespace amod {

// A named parameter with persistent gradient and optimizer state. Gradients
// accumulate across backward() calls until zero_grad().
struct ParamTensor {
  std::string name;
  Mat value;
  Mat grad;
  // Adam state, owned here so checkpoints can carry it if ever needed.
  Mat adam_m, adam_v;
  long adam_step = 0;

  ParamTensor() = default;
  ParamTensor(std::string n, Mat val)
      : name(std::move(n)), value(std::move(val)),
        grad(value.rows, value.cols), adam_m(value.rows, value.cols),
        adam_v(value.rows, value.cols) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

using NodeId = int;

// Recorded-tape reverse-mode differentiation over Mat values. One tape per
// forward pass; parents always precede children, so a single reverse sweep
// computes all gradients. With recording disabled the tape only stores
// values (target-network and evaluation passes).
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  NodeId input(Mat value);           // constant leaf
  NodeId param(ParamTensor& p);      // differentiable leaf bound to p

  const Mat& value(NodeId id) const { return nodes_[check(id)].value; }
  const Mat& grad(NodeId id) const { return nodes_[check(id)].grad; }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse; gradients of
  // bound parameters are added into their ParamTensor::grad.
  void backward(NodeId scalar_loss);

  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId add_const(NodeId a, double k);
  NodeId matmul(NodeId a, NodeId b);
  NodeId add_row_broadcast(NodeId a, NodeId row);   // a: m x n, row: 1 x n
  NodeId mul_col_broadcast(NodeId a, NodeId col);   // a: m x n, col: m x 1
  NodeId relu(NodeId a);
  NodeId softplus(NodeId a);
  NodeId log(NodeId a);
  NodeId exp(NodeId a);
  NodeId lgamma(NodeId a);
  NodeId sum(NodeId a);       // 1 x 1
  NodeId mean(NodeId a);      // 1 x 1
  NodeId row_sum(NodeId a);   // m x n -> m x 1
  NodeId col_concat(NodeId a, NodeId b);
  NodeId slice_cols(NodeId a, int c0, int c1);  // half-open
  NodeId reshape(NodeId a, int r, int c);
  NodeId min_elem(NodeId a, NodeId b);             // ties keep a's gradient
  NodeId max_with(NodeId a, const Mat& floor_mat); // gradient masked below floor
  NodeId row_logsumexp(NodeId a);                  // m x n -> m x 1
  // Per-graph ops for batches stacked as (B*N) x F with a shared adjacency.
  NodeId block_adj_mul(NodeId x, const Mat& adj);  // block-wise adj * X_b
  NodeId block_row_sum(NodeId x, int block);       // (B*block) x H -> B x H

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&, const Mat&)> backprop;  // adds into parent grads
    ParamTensor* bound = nullptr;
  };

  int check(NodeId id) const {
    require(id >= 0 && id < static_cast<int>(nodes_.size()), "tape: bad node id");
    return id;
  }
  NodeId push(Mat value, std::function<void(Tape&, const Mat&)> backprop);
  void accumulate(NodeId id, const Mat& g);

  std::vector<Node> nodes_;
  bool recording_;
};

}  // namespace amod
