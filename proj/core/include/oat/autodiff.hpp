#pragma once

// Reverse-mode automatic differentiation over dense row-major double matrices.
//
// Every quantity is a 2-D matrix; vectors are 1 x n rows and scalars are 1 x 1.
// A Value is a cheap handle to a graph node. Interior nodes are rebuilt on every
// forward pass; parameter leaves persist and are updated in place by sgd_step.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oat::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

enum class OpKind : std::uint8_t {
  leaf,
  add,
  sub,
  scale,
  mul,
  div,
  matmul,
  relu,
  log_softmax,
  softmax,
  mse,
  sum,
  mean,
  l2_norm,
  dot,
  gather_rows,
  pick,
  log,
};

std::string_view op_name(OpKind kind);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Node;

class Value {
 public:
  Value() = default;

  static Value leaf(Matrix data, bool requires_grad = false);
  static Value scalar(double v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Matrix& data() const;
  Matrix& mutable_data();
  const Matrix& grad() const;
  Matrix& mutable_grad();

  Eigen::Index rows() const { return data().rows(); }
  Eigen::Index cols() const { return data().cols(); }
  bool requires_grad() const;
  OpKind kind() const;
  std::size_t num_parents() const;

  /// Value of a 1 x 1 matrix.
  double item() const;
  void zero_grad();

  bool same_node(const Value& other) const { return node_ == other.node_; }

 private:
  friend Value make_node(OpKind, Matrix, std::vector<Value>, std::function<void(Node&)>);
  friend void backward(const Value&);
  explicit Value(std::shared_ptr<Node> node) : node_(std::move(node)) {}
  std::shared_ptr<Node> node_;
};

struct Node {
  Matrix data;
  Matrix grad;
  std::vector<Value> parents;
  std::function<void(Node&)> backward_fn;
  OpKind kind = OpKind::leaf;
  bool requires_grad = false;
};

/// Builds an interior node; backward_fn receives the node whose grad is set and
/// must accumulate into each requires_grad parent.
Value make_node(OpKind kind, Matrix data, std::vector<Value> parents,
                std::function<void(Node&)> backward_fn);

// Elementwise / linear ops. `add` accepts b either with a's shape or a 1 x n
// row broadcast over a's rows. `mul` and `div` accept b either with a's shape
// or an m x 1 column broadcast over a's columns.
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value scale(const Value& a, double factor);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);
Value matmul(const Value& a, const Value& b);
Value relu(const Value& a);
Value log(const Value& a);

// Row-wise ops.
Value log_softmax(const Value& a);
Value softmax(const Value& a);
Value l2_norm(const Value& a);       // m x 1
Value dot(const Value& a, const Value& b);  // m x 1
Value gather_rows(const Value& a, std::span<const std::size_t> rows);
Value pick(const Value& a, std::span<const int> cols);  // m x 1, a(i, cols[i])

// Reductions to 1 x 1.
Value sum(const Value& a);
Value mean(const Value& a);
Value mse(const Value& a, const Value& b);  // mean over all elements

/// Same data, no parents, never requires grad (stop-gradient).
Value detach(const Value& v);

/// Seeds root.grad = 1 and back-propagates. Interior gradients are recomputed
/// each call; leaf gradients accumulate.
void backward(const Value& root);

struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<Matrix> velocity;
};

/// v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v; grad <- 0.
void sgd_step(std::span<Value> params, OptimizerState& state);

void zero_grads(std::span<Value> params);

}  // namespace oat::ad
