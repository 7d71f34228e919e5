#pragma once

#include "inset/tensor.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

/// Primitive operations understood by the tape.
enum class OpKind {
  Leaf,          // differentiable input (parameter)
  Constant,      // non-differentiable input
  MatMul,        // A(n x k) * B(k x c)
  Add,           // elementwise, same shape
  Sub,           // elementwise, same shape
  Mul,           // elementwise, same shape
  AddRow,        // A(n x c) + b(1 x c) broadcast over rows
  MulCol,        // A(n x c) * v(n x 1) broadcast over columns
  Relu,
  Sigmoid,
  MaskedRowSum,  // X(n x c), M(k x n) 0/1 -> k x c, row r = sum of X rows selected by M row r
  RowSum,        // X(n x c) -> 1 x c
  Sum,           // all entries -> 1 x 1
  Scale,         // attr * A
  Bce,           // P, T same shape -> 1 x 1 summed binary cross-entropy
  LogSumExp,     // all entries -> 1 x 1
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::MatMul: return "matmul";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::AddRow: return "add_row";
    case OpKind::MulCol: return "mul_col";
    case OpKind::Relu: return "relu";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::MaskedRowSum: return "masked_row_sum";
    case OpKind::RowSum: return "row_sum";
    case OpKind::Sum: return "sum";
    case OpKind::Scale: return "scale";
    case OpKind::Bce: return "bce";
    case OpKind::LogSumExp: return "logsumexp";
  }
  return "?";
}

/// Probabilities are clipped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

class Tape;

/// Handle to a node on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t index = 0;

  const Tensor& value() const;
  const Tensor& grad() const;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so inputs always
/// precede their consumers. Single owner; not thread-safe.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value) { return push(OpKind::Leaf, {}, 0, 0.0, std::move(value), true); }
  Var constant(Tensor value) { return push(OpKind::Constant, {}, 0, 0.0, std::move(value), false); }

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(std::size_t i) const { return nodes_.at(i).value; }

  /// Gradient of the last backward pass; all-zero if the node did not reach the loss.
  const Tensor& grad(std::size_t i) const {
    const Node& n = nodes_.at(i);
    if (n.grad.empty() && !n.value.empty()) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  void clear_grads() {
    for (auto& n : nodes_) n.grad = Tensor();
  }

  Var apply(OpKind op, std::span<const Var> inputs, double attr = 0.0);

  /// Accumulates d(loss)/d(node) for every node. Loss must be 1x1.
  void backward(Var loss);

 private:
  struct Node {
    OpKind op;
    std::array<std::size_t, 2> in{};
    std::size_t n_in = 0;
    double attr = 0.0;
    Tensor value;
    mutable Tensor grad;
    bool requires_grad = false;
  };

  Var push(OpKind op, std::array<std::size_t, 2> in, std::size_t n_in, double attr, Tensor value,
           bool requires_grad) {
    nodes_.push_back(Node{op, in, n_in, attr, std::move(value), Tensor(), requires_grad});
    return Var{this, nodes_.size() - 1};
  }

  [[noreturn]] static void shape_fail(OpKind op, const Tensor& a, const Tensor& b) {
    std::ostringstream msg;
    msg << op_name(op) << ": incompatible shapes " << a.shape_str() << " and " << b.shape_str();
    throw ShapeError(msg.str());
  }

  static Tensor forward(OpKind op, const Tensor* a, const Tensor* b, double attr);
  void backward_node(const Node& node);
  Tensor& grad_ref(std::size_t i) {
    Node& n = nodes_[i];
    if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(index); }
inline const Tensor& Var::grad() const { return tape->grad(index); }

inline Tensor Tape::forward(OpKind op, const Tensor* a, const Tensor* b, double attr) {
  switch (op) {
    case OpKind::MatMul: {
      if (a->cols() != b->rows()) shape_fail(op, *a, *b);
      Tensor out(a->rows(), b->cols());
      gemm_acc(*a, *b, out);
      return out;
    }
    case OpKind::Add:
    case OpKind::Sub:
    case OpKind::Mul: {
      if (!a->same_shape(*b)) shape_fail(op, *a, *b);
      Tensor out(a->rows(), a->cols());
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = (*a)[i], y = (*b)[i];
        out[i] = op == OpKind::Add ? x + y : op == OpKind::Sub ? x - y : x * y;
      }
      return out;
    }
    case OpKind::AddRow: {
      if (b->rows() != 1 || b->cols() != a->cols()) shape_fail(op, *a, *b);
      Tensor out(a->rows(), a->cols());
      for (std::size_t r = 0; r < a->rows(); ++r)
        for (std::size_t c = 0; c < a->cols(); ++c) out(r, c) = (*a)(r, c) + (*b)(0, c);
      return out;
    }
    case OpKind::MulCol: {
      if (b->cols() != 1 || b->rows() != a->rows()) shape_fail(op, *a, *b);
      Tensor out(a->rows(), a->cols());
      for (std::size_t r = 0; r < a->rows(); ++r)
        for (std::size_t c = 0; c < a->cols(); ++c) out(r, c) = (*a)(r, c) * (*b)(r, 0);
      return out;
    }
    case OpKind::Relu: {
      Tensor out(a->rows(), a->cols());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*a)[i] > 0.0 ? (*a)[i] : 0.0;
      return out;
    }
    case OpKind::Sigmoid: {
      Tensor out(a->rows(), a->cols());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid((*a)[i]);
      return out;
    }
    case OpKind::MaskedRowSum: {
      // a: X (n x c), b: M (k x n)
      if (b->cols() != a->rows()) shape_fail(op, *a, *b);
      Tensor out(b->rows(), a->cols());
      std::vector<double> scratch;
      scratch.reserve(a->rows());
      for (std::size_t r = 0; r < b->rows(); ++r) {
        for (std::size_t c = 0; c < a->cols(); ++c) {
          scratch.clear();
          for (std::size_t i = 0; i < a->rows(); ++i)
            if ((*b)(r, i) != 0.0) scratch.push_back((*a)(i, c));
          out(r, c) = canonical_sum(scratch);
        }
      }
      return out;
    }
    case OpKind::RowSum: {
      Tensor out(1, a->cols());
      std::vector<double> scratch(a->rows());
      for (std::size_t c = 0; c < a->cols(); ++c) {
        for (std::size_t i = 0; i < a->rows(); ++i) scratch[i] = (*a)(i, c);
        out(0, c) = canonical_sum(scratch);
      }
      return out;
    }
    case OpKind::Sum:
      return Tensor::scalar(canonical_sum_copy(a->values()));
    case OpKind::Scale: {
      Tensor out(a->rows(), a->cols());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = attr * (*a)[i];
      return out;
    }
    case OpKind::Bce: {
      if (!a->same_shape(*b)) shape_fail(op, *a, *b);
      std::vector<double> terms(a->size());
      for (std::size_t i = 0; i < a->size(); ++i) {
        const double p = clamp_prob((*a)[i]), t = (*b)[i];
        terms[i] = -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
      }
      return Tensor::scalar(canonical_sum(terms));
    }
    case OpKind::LogSumExp: {
      if (a->empty()) throw ShapeError("logsumexp: empty input");
      const auto vals = a->values();
      const double mx = *std::max_element(vals.begin(), vals.end());
      std::vector<double> terms(vals.size());
      for (std::size_t i = 0; i < vals.size(); ++i) terms[i] = std::exp(vals[i] - mx);
      return Tensor::scalar(mx + std::log(canonical_sum(terms)));
    }
    case OpKind::Leaf:
    case OpKind::Constant:
      break;
  }
  throw std::logic_error(std::string("forward: unsupported op ") + op_name(op));
}

inline Var Tape::apply(OpKind op, std::span<const Var> inputs, double attr) {
  const bool binary = op == OpKind::MatMul || op == OpKind::Add || op == OpKind::Sub ||
                      op == OpKind::Mul || op == OpKind::AddRow || op == OpKind::MulCol ||
                      op == OpKind::MaskedRowSum || op == OpKind::Bce;
  const std::size_t expected = binary ? 2 : 1;
  if (op == OpKind::Leaf || op == OpKind::Constant)
    throw std::invalid_argument("apply: use leaf()/constant() for inputs");
  if (inputs.size() != expected) {
    throw std::invalid_argument(std::string(op_name(op)) + ": expected " +
                                std::to_string(expected) + " inputs");
  }
  for (const Var& v : inputs)
    if (v.tape != this) throw std::invalid_argument("apply: input belongs to another tape");

  const Tensor* a = &nodes_[inputs[0].index].value;
  const Tensor* b = binary ? &nodes_[inputs[1].index].value : nullptr;
  Tensor out = forward(op, a, b, attr);

  std::array<std::size_t, 2> in{inputs[0].index, binary ? inputs[1].index : 0};
  bool rg = nodes_[in[0]].requires_grad || (binary && nodes_[in[1]].requires_grad);
  return push(op, in, expected, attr, std::move(out), rg);
}

inline void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  const Tensor& lv = nodes_.at(loss.index).value;
  if (lv.rows() != 1 || lv.cols() != 1)
    throw ShapeError("backward: loss must be a 1x1 scalar, got " + lv.shape_str());
  clear_grads();
  grad_ref(loss.index)[0] = 1.0;
  for (std::size_t i = loss.index + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.requires_grad || node.n_in == 0 || node.grad.empty()) continue;
    backward_node(node);
  }
}

inline void Tape::backward_node(const Node& node) {
  const Tensor& g = node.grad;
  const std::size_t ia = node.in[0];
  const std::size_t ib = node.in[1];
  const bool need_a = nodes_[ia].requires_grad;
  const bool need_b = node.n_in > 1 && nodes_[ib].requires_grad;
  const Tensor& a = nodes_[ia].value;

  switch (node.op) {
    case OpKind::MatMul: {
      const Tensor& b = nodes_[ib].value;
      if (need_a) gemm_nt_acc(g, b, grad_ref(ia));
      if (need_b) gemm_tn_acc(a, g, grad_ref(ib));
      break;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = node.op == OpKind::Add ? 1.0 : -1.0;
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (need_b) {
        Tensor& gb = grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      }
      break;
    }
    case OpKind::Mul: {
      const Tensor& b = nodes_[ib].value;
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (need_b) {
        Tensor& gb = grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      break;
    }
    case OpKind::AddRow: {
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (need_b) {
        Tensor& gb = grad_ref(ib);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
      }
      break;
    }
    case OpKind::MulCol: {
      const Tensor& v = nodes_[ib].value;
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) ga(r, c) += g(r, c) * v(r, 0);
      }
      if (need_b) {
        Tensor& gv = grad_ref(ib);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gv(r, 0) += g(r, c) * a(r, c);
      }
      break;
    }
    case OpKind::Relu: {
      Tensor& ga = grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a[i] > 0.0) ga[i] += g[i];
      break;
    }
    case OpKind::Sigmoid: {
      Tensor& ga = grad_ref(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double y = node.value[i];
        ga[i] += g[i] * y * (1.0 - y);
      }
      break;
    }
    case OpKind::MaskedRowSum: {
      const Tensor& m = nodes_[ib].value;
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t r = 0; r < m.rows(); ++r)
          for (std::size_t i = 0; i < m.cols(); ++i) {
            if (m(r, i) == 0.0) continue;
            for (std::size_t c = 0; c < ga.cols(); ++c) ga(i, c) += g(r, c);
          }
      }
      break;
    }
    case OpKind::RowSum: {
      Tensor& ga = grad_ref(ia);
      for (std::size_t r = 0; r < ga.rows(); ++r)
        for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, c);
      break;
    }
    case OpKind::Sum: {
      Tensor& ga = grad_ref(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      break;
    }
    case OpKind::Scale: {
      Tensor& ga = grad_ref(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.attr * g[i];
      break;
    }
    case OpKind::Bce: {
      // Gradient is taken at the clipped probability; the clip itself is
      // passed through so saturated predictions can still recover.
      const Tensor& t = nodes_[ib].value;
      if (need_a) {
        Tensor& ga = grad_ref(ia);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double p = clamp_prob(a[i]);
          ga[i] += g[0] * (-t[i] / p + (1.0 - t[i]) / (1.0 - p));
        }
      }
      if (need_b) {
        Tensor& gt = grad_ref(ib);
        for (std::size_t i = 0; i < a.size(); ++i) {
          const double p = clamp_prob(a[i]);
          gt[i] += g[0] * (std::log(1.0 - p) - std::log(p));
        }
      }
      break;
    }
    case OpKind::LogSumExp: {
      Tensor& ga = grad_ref(ia);
      const double lse = node.value[0];
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * std::exp(a[i] - lse);
      break;
    }
    case OpKind::Leaf:
    case OpKind::Constant:
      break;
  }
}

// Free-function front end.

inline Var forward_primitive(OpKind op, std::span<const Var> inputs, double attr = 0.0) {
  if (inputs.empty()) throw std::invalid_argument("forward_primitive: no inputs");
  return inputs[0].tape->apply(op, inputs, attr);
}

namespace detail {
inline Var apply2(OpKind op, Var a, Var b) {
  const std::array<Var, 2> in{a, b};
  return a.tape->apply(op, in);
}
inline Var apply1(OpKind op, Var a, double attr = 0.0) {
  const std::array<Var, 1> in{a};
  return a.tape->apply(op, in, attr);
}
}  // namespace detail

inline Var matmul(Var a, Var b) { return detail::apply2(OpKind::MatMul, a, b); }
inline Var add(Var a, Var b) { return detail::apply2(OpKind::Add, a, b); }
inline Var sub(Var a, Var b) { return detail::apply2(OpKind::Sub, a, b); }
inline Var mul(Var a, Var b) { return detail::apply2(OpKind::Mul, a, b); }
inline Var add_row(Var a, Var bias) { return detail::apply2(OpKind::AddRow, a, bias); }
inline Var mul_col(Var a, Var v) { return detail::apply2(OpKind::MulCol, a, v); }
inline Var relu(Var a) { return detail::apply1(OpKind::Relu, a); }
inline Var sigmoid(Var a) { return detail::apply1(OpKind::Sigmoid, a); }
inline Var masked_row_sum(Var x, Var mask) { return detail::apply2(OpKind::MaskedRowSum, x, mask); }
inline Var row_sum(Var a) { return detail::apply1(OpKind::RowSum, a); }
inline Var sum(Var a) { return detail::apply1(OpKind::Sum, a); }
inline Var scale(Var a, double s) { return detail::apply1(OpKind::Scale, a, s); }
inline Var bce(Var probs, Var targets) { return detail::apply2(OpKind::Bce, probs, targets); }
inline Var logsumexp(Var a) { return detail::apply1(OpKind::LogSumExp, a); }

/// x * W + b for x (n x in), W (in x out), b (1 x out).
inline Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace inset
