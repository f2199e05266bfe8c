#include "oat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace oat::ad {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << '(' << m.rows() << 'x' << m.cols() << ')';
  return os.str();
}

[[noreturn]] void shape_fail(OpKind kind, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

[[noreturn]] void shape_fail(OpKind kind, const Matrix& a, std::string_view what) {
  throw ShapeError(std::string(op_name(kind)) + ": " + std::string(what) + ", got " + shape_str(a));
}

bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

}  // namespace

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::scale: return "scale";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::softmax: return "softmax";
    case OpKind::mse: return "mse";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::l2_norm: return "l2_norm";
    case OpKind::dot: return "dot";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::pick: return "pick";
    case OpKind::log: return "log";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Value

Value Value::leaf(Matrix data, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->grad = Matrix::Zero(data.rows(), data.cols());
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Value(std::move(node));
}

Value Value::scalar(double v, bool requires_grad) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return leaf(std::move(m), requires_grad);
}

const Matrix& Value::data() const { return node_->data; }
Matrix& Value::mutable_data() { return node_->data; }
const Matrix& Value::grad() const { return node_->grad; }
Matrix& Value::mutable_grad() { return node_->grad; }
bool Value::requires_grad() const { return node_->requires_grad; }
OpKind Value::kind() const { return node_->kind; }
std::size_t Value::num_parents() const { return node_->parents.size(); }

double Value::item() const {
  if (rows() != 1 || cols() != 1) shape_fail(node_->kind, node_->data, "item() needs a 1x1 value");
  return node_->data(0, 0);
}

void Value::zero_grad() { node_->grad.setZero(); }

Value make_node(OpKind kind, Matrix data, std::vector<Value> parents,
                std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->kind = kind;
  node->grad = Matrix::Zero(data.rows(), data.cols());
  node->data = std::move(data);
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Value& p) { return p.requires_grad(); });
  node->requires_grad = needs;
  if (needs) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Value(std::move(node));
}

// Gradient accumulation helper: parent i of node n, if it wants a gradient.
#define OAT_PARENT_GRAD(n, i) \
  if (Value& p_ = (n).parents[i]; p_.requires_grad()) p_.mutable_grad()

// ---------------------------------------------------------------------------
// Ops

Value add(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (same_shape(A, B)) {
    return make_node(OpKind::add, A + B, {a, b}, [](Node& n) {
      OAT_PARENT_GRAD(n, 0) += n.grad;
      OAT_PARENT_GRAD(n, 1) += n.grad;
    });
  }
  if (B.rows() == 1 && B.cols() == A.cols()) {
    Matrix out = A.rowwise() + B.row(0);
    return make_node(OpKind::add, std::move(out), {a, b}, [](Node& n) {
      OAT_PARENT_GRAD(n, 0) += n.grad;
      OAT_PARENT_GRAD(n, 1) += n.grad.colwise().sum();
    });
  }
  shape_fail(OpKind::add, A, B);
}

Value sub(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (!same_shape(A, B)) shape_fail(OpKind::sub, A, B);
  return make_node(OpKind::sub, A - B, {a, b}, [](Node& n) {
    OAT_PARENT_GRAD(n, 0) += n.grad;
    OAT_PARENT_GRAD(n, 1) -= n.grad;
  });
}

Value scale(const Value& a, double factor) {
  return make_node(OpKind::scale, a.data() * factor, {a}, [factor](Node& n) {
    OAT_PARENT_GRAD(n, 0) += factor * n.grad;
  });
}

Value mul(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (same_shape(A, B)) {
    return make_node(OpKind::mul, A.cwiseProduct(B), {a, b}, [](Node& n) {
      const Matrix& A = n.parents[0].data();
      const Matrix& B = n.parents[1].data();
      OAT_PARENT_GRAD(n, 0) += n.grad.cwiseProduct(B);
      OAT_PARENT_GRAD(n, 1) += n.grad.cwiseProduct(A);
    });
  }
  if (B.cols() == 1 && B.rows() == A.rows()) {
    Matrix out = A.array().colwise() * B.col(0).array();
    return make_node(OpKind::mul, std::move(out), {a, b}, [](Node& n) {
      const Matrix& A = n.parents[0].data();
      const Matrix& B = n.parents[1].data();
      OAT_PARENT_GRAD(n, 0) += (n.grad.array().colwise() * B.col(0).array()).matrix();
      OAT_PARENT_GRAD(n, 1) += n.grad.cwiseProduct(A).rowwise().sum();
    });
  }
  shape_fail(OpKind::mul, A, B);
}

Value div(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (same_shape(A, B)) {
    return make_node(OpKind::div, A.cwiseQuotient(B), {a, b}, [](Node& n) {
      const Matrix& A = n.parents[0].data();
      const Matrix& B = n.parents[1].data();
      OAT_PARENT_GRAD(n, 0) += n.grad.cwiseQuotient(B);
      OAT_PARENT_GRAD(n, 1) -= (n.grad.array() * A.array() / B.array().square()).matrix();
    });
  }
  if (B.cols() == 1 && B.rows() == A.rows()) {
    Matrix out = A.array().colwise() / B.col(0).array();
    return make_node(OpKind::div, std::move(out), {a, b}, [](Node& n) {
      const Matrix& A = n.parents[0].data();
      const Matrix& B = n.parents[1].data();
      OAT_PARENT_GRAD(n, 0) += (n.grad.array().colwise() / B.col(0).array()).matrix();
      OAT_PARENT_GRAD(n, 1) -=
          (n.grad.cwiseProduct(A).rowwise().sum().array() / B.col(0).array().square()).matrix();
    });
  }
  shape_fail(OpKind::div, A, B);
}

Value matmul(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (A.cols() != B.rows()) shape_fail(OpKind::matmul, A, B);
  Matrix out = A * B;
  return make_node(OpKind::matmul, std::move(out), {a, b}, [](Node& n) {
    const Matrix& A = n.parents[0].data();
    const Matrix& B = n.parents[1].data();
    if (n.parents[0].requires_grad()) n.parents[0].mutable_grad().noalias() += n.grad * B.transpose();
    if (n.parents[1].requires_grad()) n.parents[1].mutable_grad().noalias() += A.transpose() * n.grad;
  });
}

Value relu(const Value& a) {
  return make_node(OpKind::relu, a.data().cwiseMax(0.0), {a}, [](Node& n) {
    const Matrix& A = n.parents[0].data();
    OAT_PARENT_GRAD(n, 0) += (A.array() > 0.0).select(n.grad, 0.0).matrix();
  });
}

Value log(const Value& a) {
  const Matrix& A = a.data();
  if ((A.array() <= 0.0).any() || A.hasNaN()) {
    throw DomainError("log: input must be strictly positive");
  }
  return make_node(OpKind::log, A.array().log().matrix(), {a}, [](Node& n) {
    OAT_PARENT_GRAD(n, 0) += n.grad.cwiseQuotient(n.parents[0].data());
  });
}

Value log_softmax(const Value& a) {
  const Matrix& A = a.data();
  if (A.cols() == 0) shape_fail(OpKind::log_softmax, A, "needs at least one column");
  Matrix out(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double m = A.row(i).maxCoeff();
    const double lse = std::log((A.row(i).array() - m).exp().sum());
    out.row(i) = (A.row(i).array() - m - lse).matrix();
  }
  return make_node(OpKind::log_softmax, std::move(out), {a}, [](Node& n) {
    // d/dz log_softmax: g - softmax * rowsum(g)
    const Matrix soft = n.data.array().exp().matrix();
    const Eigen::VectorXd gsum = n.grad.rowwise().sum();
    OAT_PARENT_GRAD(n, 0) += n.grad - (soft.array().colwise() * gsum.array()).matrix();
  });
}

Value softmax(const Value& a) {
  const Matrix& A = a.data();
  if (A.cols() == 0) shape_fail(OpKind::softmax, A, "needs at least one column");
  Matrix out(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const double m = A.row(i).maxCoeff();
    out.row(i) = (A.row(i).array() - m).exp().matrix();
    out.row(i) /= out.row(i).sum();
  }
  return make_node(OpKind::softmax, std::move(out), {a}, [](Node& n) {
    const Matrix& S = n.data;
    const Eigen::VectorXd inner = n.grad.cwiseProduct(S).rowwise().sum();
    OAT_PARENT_GRAD(n, 0) += (S.array() * (n.grad.array().colwise() - inner.array())).matrix();
  });
}

Value l2_norm(const Value& a) {
  Matrix out = a.data().rowwise().norm();
  return make_node(OpKind::l2_norm, std::move(out), {a}, [](Node& n) {
    const Matrix& A = n.parents[0].data();
    if (!n.parents[0].requires_grad()) return;
    Matrix& G = n.parents[0].mutable_grad();
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      const double norm = n.data(i, 0);
      if (norm > 0.0) G.row(i) += (n.grad(i, 0) / norm) * A.row(i);
    }
  });
}

Value dot(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (!same_shape(A, B)) shape_fail(OpKind::dot, A, B);
  Matrix out = A.cwiseProduct(B).rowwise().sum();
  return make_node(OpKind::dot, std::move(out), {a, b}, [](Node& n) {
    const Matrix& A = n.parents[0].data();
    const Matrix& B = n.parents[1].data();
    OAT_PARENT_GRAD(n, 0) += (B.array().colwise() * n.grad.col(0).array()).matrix();
    OAT_PARENT_GRAD(n, 1) += (A.array().colwise() * n.grad.col(0).array()).matrix();
  });
}

Value gather_rows(const Value& a, std::span<const std::size_t> rows) {
  const Matrix& A = a.data();
  Matrix out(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= static_cast<std::size_t>(A.rows())) {
      shape_fail(OpKind::gather_rows, A, "row index " + std::to_string(rows[k]) + " out of range");
    }
    out.row(static_cast<Eigen::Index>(k)) = A.row(static_cast<Eigen::Index>(rows[k]));
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_node(OpKind::gather_rows, std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    if (!n.parents[0].requires_grad()) return;
    Matrix& G = n.parents[0].mutable_grad();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      G.row(static_cast<Eigen::Index>(idx[k])) += n.grad.row(static_cast<Eigen::Index>(k));
    }
  });
}

Value pick(const Value& a, std::span<const int> cols) {
  const Matrix& A = a.data();
  if (static_cast<Eigen::Index>(cols.size()) != A.rows()) {
    shape_fail(OpKind::pick, A, "needs one column index per row (" + std::to_string(cols.size()) + ")");
  }
  Matrix out(A.rows(), 1);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    const int c = cols[static_cast<std::size_t>(i)];
    if (c < 0 || c >= A.cols()) {
      shape_fail(OpKind::pick, A, "column index " + std::to_string(c) + " out of range");
    }
    out(i, 0) = A(i, c);
  }
  std::vector<int> idx(cols.begin(), cols.end());
  return make_node(OpKind::pick, std::move(out), {a}, [idx = std::move(idx)](Node& n) {
    if (!n.parents[0].requires_grad()) return;
    Matrix& G = n.parents[0].mutable_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      G(static_cast<Eigen::Index>(i), idx[i]) += n.grad(static_cast<Eigen::Index>(i), 0);
    }
  });
}

Value sum(const Value& a) {
  Matrix out(1, 1);
  out(0, 0) = a.data().sum();
  return make_node(OpKind::sum, std::move(out), {a}, [](Node& n) {
    OAT_PARENT_GRAD(n, 0).array() += n.grad(0, 0);
  });
}

Value mean(const Value& a) {
  const auto count = static_cast<double>(a.data().size());
  if (count == 0) shape_fail(OpKind::mean, a.data(), "empty input");
  Matrix out(1, 1);
  out(0, 0) = a.data().sum() / count;
  return make_node(OpKind::mean, std::move(out), {a}, [count](Node& n) {
    OAT_PARENT_GRAD(n, 0).array() += n.grad(0, 0) / count;
  });
}

Value mse(const Value& a, const Value& b) {
  const Matrix& A = a.data();
  const Matrix& B = b.data();
  if (!same_shape(A, B)) shape_fail(OpKind::mse, A, B);
  const auto count = static_cast<double>(A.size());
  if (count == 0) shape_fail(OpKind::mse, A, "empty input");
  Matrix out(1, 1);
  out(0, 0) = (A - B).squaredNorm() / count;
  return make_node(OpKind::mse, std::move(out), {a, b}, [count](Node& n) {
    const Matrix diff = (n.parents[0].data() - n.parents[1].data()) * (2.0 * n.grad(0, 0) / count);
    OAT_PARENT_GRAD(n, 0) += diff;
    OAT_PARENT_GRAD(n, 1) -= diff;
  });
}

Value detach(const Value& v) { return Value::leaf(v.data(), false); }

#undef OAT_PARENT_GRAD

// ---------------------------------------------------------------------------
// Backward

void backward(const Value& root) {
  Node& r = *root.node_;
  if (r.data.rows() != 1 || r.data.cols() != 1) {
    throw ShapeError("backward: root must be 1x1, got " + shape_str(r.data));
  }
  if (!r.requires_grad) {
    r.grad.setConstant(1.0);
    return;
  }

  // Iterative post-order DFS; `order` ends up with parents before children.
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&r, 0);
  visited.insert(&r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].node_.get();
      if (parent->requires_grad && !visited.contains(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->kind != OpKind::leaf) n->grad.setZero();
  }
  r.grad.setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->kind != OpKind::leaf && n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Optimizer

void zero_grads(std::span<Value> params) {
  for (Value& p : params) p.zero_grad();
}

void sgd_step(std::span<Value> params, OptimizerState& state) {
  if (state.velocity.size() != params.size()) {
    state.velocity.clear();
    state.velocity.reserve(params.size());
    for (const Value& p : params) state.velocity.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Value& p = params[i];
    Matrix& v = state.velocity[i];
    if (v.rows() != p.rows() || v.cols() != p.cols()) {
      throw ShapeError("sgd_step: velocity shape does not match parameter " + std::to_string(i));
    }
    v = state.momentum * v + (p.grad() + state.weight_decay * p.data());
    p.mutable_data() -= state.learning_rate * v;
    p.zero_grad();
  }
}

}  // namespace oat::ad
