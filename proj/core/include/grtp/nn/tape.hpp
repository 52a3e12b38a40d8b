#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "grtp/common.hpp"

namespace grtp::nn {

using Matrix = Eigen::MatrixXd;

/// Handle into a Tape. Cheap to copy; only meaningful for the tape that
/// produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Dynamic reverse-mode tape over dense 64-bit matrices. Columns are batch
/// samples throughout the project. A tape is built fresh for every forward
/// pass; backward() walks the recorded nodes in reverse creation order.
///
/// Not thread-safe; one tape per worker.
class Tape {
public:
  Tape() { nodes_.reserve(256); }

  Var leaf(Matrix value, bool requires_grad = true);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() root with respect to v. Zero matrix if
  /// the node never received a contribution.
  const Matrix& grad(Var v) const;
  /// True if any gradient was accumulated into v during the last backward().
  bool grad_touched(Var v) const;

  // --- arithmetic ---
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var div(Var a, Var b);  // elementwise
  Var add_bias(Var a, Var bias);           // bias (r x 1) broadcast over columns
  Var affine(Var a, double scale, double shift);
  Var scale(Var a, double s) { return affine(a, s, 0.0); }
  Var neg(Var a) { return affine(a, -1.0, 0.0); }

  // --- elementwise nonlinearities ---
  Var tanh_(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var exp_(Var a);
  Var log_(Var a);
  Var square(Var a);
  Var sqrt_(Var a);
  Var max_floor(Var a, double floor);  // elementwise max(a, floor); grad blocked at the floor

  // --- reductions ---
  Var sum_all(Var a);   // 1x1
  Var mean_all(Var a);  // 1x1
  Var colwise_sum(Var a);              // (r x B) -> (1 x B)
  Var logsumexp_colwise(Var a);        // (r x B) -> (1 x B), stable
  Var colwise_max_abs(Var a);          // (r x B) -> (1 x B); subgradient at the argmax

  // --- structure ---
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, Eigen::Index row0, Eigen::Index nrows);
  Var div_rowvec(Var a, Var s);        // (r x B) ./ (1 x B)

  /// Seeds d(root)/d(root) = 1 and accumulates gradients for every node that
  /// requires them. root must be 1x1.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;
    bool requires_grad = false;
    bool touched = false;
  };

  std::vector<Node> nodes_;

  Var push(Matrix value, bool requires_grad, std::function<void()> back);
  void accumulate(Var v, const Matrix& g);
  Node& node(Var v);
  const Node& node(Var v) const;
  void check(Var v, const char* op) const;
};

}  // namespace grtp::nn
