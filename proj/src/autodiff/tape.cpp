#include "ropinn/autodiff/tape.hpp"

#include "ropinn/errors.hpp"

#include <mutex>
#include <string>
#include <utility>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ropinn::ad {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(Op op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op_name(op)) + ": shape mismatch " + shape(a) + " vs " +
                         shape(b));
  }
}

// Vectorized tanh: a rational approximation near zero (cephes coefficients)
// and the exp form elsewhere. Agrees with std::tanh to a few ulp; std::tanh
// itself does not vectorize and dominated the training profile.
Matrix tanh_of(const Matrix& m) {
  const auto x = m.array();
  const Eigen::ArrayXXd ax = x.abs();
  const Eigen::ArrayXXd e = (-2.0 * ax).exp();
  const Eigen::ArrayXXd z = x.square();
  const Eigen::ArrayXXd p =
      (-9.64399179425052238628e-1 * z - 9.92877231001918586564e1) * z - 1.61468768441708447952e3;
  const Eigen::ArrayXXd q =
      ((z + 1.12811678491632931402e2) * z + 2.23548839060100448583e3) * z +
      4.84406305325125486048e3;
  return (ax < 0.625).select(x + x * z * p / q, (1.0 - e) / (1.0 + e) * x.sign()).matrix();
}

Matrix evaluate(Op op, const Matrix* a, const Matrix* b, double attr) {
  switch (op) {
  case Op::add:
    require_same_shape(op, *a, *b);
    return *a + *b;
  case Op::sub:
    require_same_shape(op, *a, *b);
    return *a - *b;
  case Op::mul:
    require_same_shape(op, *a, *b);
    return a->cwiseProduct(*b);
  case Op::scale:
    return attr * *a;
  case Op::shift:
    return a->array() + attr;
  case Op::neg:
    return -*a;
  case Op::square:
    return a->array().square();
  case Op::tanh:
    return tanh_of(*a);
  case Op::sin:
    return a->array().sin();
  case Op::cos:
    return a->array().cos();
  case Op::exp:
    return a->array().exp();
  case Op::reciprocal:
    return a->array().inverse();
  case Op::sum:
    return Matrix::Constant(1, 1, a->sum());
  case Op::mean:
    if (a->size() == 0) throw DimensionError("mean of an empty matrix");
    return Matrix::Constant(1, 1, a->mean());
  case Op::matmul:
    if (a->cols() != b->rows()) {
      throw DimensionError("matmul: inner dimensions differ " + shape(*a) + " * " + shape(*b));
    }
    return *a * *b;
  case Op::add_bias:
    if (b->cols() != 1 || b->rows() != a->rows()) {
      throw DimensionError("add_bias: bias " + shape(*b) + " does not fit " + shape(*a));
    }
    return a->colwise() + b->col(0);
  case Op::constant:
  case Op::parameter:
  case Op::input:
    break;
  }
  throw StructuralError("evaluate: op " + std::string(op_name(op)) + " has no parents");
}

// Accumulate `delta` into a possibly empty adjoint slot.
void accumulate(Matrix& slot, Matrix&& delta) {
  if (slot.size() == 0) {
    slot = std::move(delta);
  } else {
    slot += delta;
  }
}

} // namespace

std::string_view op_name(Op op) noexcept {
  switch (op) {
  case Op::constant: return "constant";
  case Op::parameter: return "parameter";
  case Op::input: return "input";
  case Op::add: return "add";
  case Op::sub: return "sub";
  case Op::mul: return "mul";
  case Op::scale: return "scale";
  case Op::shift: return "shift";
  case Op::neg: return "neg";
  case Op::square: return "square";
  case Op::tanh: return "tanh";
  case Op::sin: return "sin";
  case Op::cos: return "cos";
  case Op::exp: return "exp";
  case Op::reciprocal: return "reciprocal";
  case Op::sum: return "sum";
  case Op::mean: return "mean";
  case Op::matmul: return "matmul";
  case Op::add_bias: return "add_bias";
  }
  return "unknown";
}

int op_arity(Op op) noexcept {
  switch (op) {
  case Op::constant:
  case Op::parameter:
  case Op::input:
    return 0;
  case Op::add:
  case Op::sub:
  case Op::mul:
  case Op::matmul:
  case Op::add_bias:
    return 2;
  default:
    return 1;
  }
}

Tape::Tape() {
  // Node values are often a megabyte or more. glibc serves blocks that size
  // with fresh mmap pages, and the page faults cost about a third of a
  // training step. Keep them on the heap instead.
  static std::once_flag once;
  std::call_once(once, [] {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    mallopt(M_TOP_PAD, 64 << 20);
#endif
  });
}

NodeId Tape::push(Op op, std::uint8_t arity, std::array<NodeId, 2> parents, double attr,
                  Matrix value) {
  if (nodes_.size() >= NodeId::invalid_index) throw StructuralError("tape is full");
  Node n;
  n.id = NodeId{static_cast<std::uint32_t>(nodes_.size())};
  n.op = op;
  n.arity = arity;
  n.parents = parents;
  n.attr = attr;
  n.needs_grad = op == Op::parameter;
  for (std::uint8_t i = 0; i < arity; ++i) n.needs_grad = n.needs_grad || nodes_[parents[i].index].needs_grad;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

void Tape::check(NodeId id) const {
  if (!id.valid() || id.index >= nodes_.size()) {
    throw StructuralError("unknown node id " + std::to_string(id.index));
  }
}

NodeId Tape::constant(Matrix value) { return push(Op::constant, 0, {}, 0.0, std::move(value)); }

NodeId Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

NodeId Tape::parameter(Matrix value, std::size_t flat_offset) {
  const std::size_t n = static_cast<std::size_t>(value.size());
  NodeId id = push(Op::parameter, 0, {}, 0.0, std::move(value));
  nodes_.back().flat_offset = flat_offset;
  leaves_.push_back({id, flat_offset});
  extent_ = std::max(extent_, flat_offset + n);
  return id;
}

NodeId Tape::input(Matrix value) { return push(Op::input, 0, {}, 0.0, std::move(value)); }

NodeId Tape::unary(Op op, NodeId a) {
  if (op_arity(op) != 1) throw StructuralError(std::string(op_name(op)) + " is not unary");
  check(a);
  return push(op, 1, {a, NodeId{}}, 0.0, evaluate(op, &nodes_[a.index].value, nullptr, 0.0));
}

NodeId Tape::binary(Op op, NodeId a, NodeId b) {
  if (op_arity(op) != 2) throw StructuralError(std::string(op_name(op)) + " is not binary");
  check(a);
  check(b);
  Matrix v = evaluate(op, &nodes_[a.index].value, &nodes_[b.index].value, 0.0);
  return push(op, 2, {a, b}, 0.0, std::move(v));
}

NodeId Tape::scale(NodeId a, double alpha) {
  check(a);
  return push(Op::scale, 1, {a, NodeId{}}, alpha, alpha * nodes_[a.index].value);
}

NodeId Tape::shift(NodeId a, double beta) {
  check(a);
  return push(Op::shift, 1, {a, NodeId{}}, beta, nodes_[a.index].value.array() + beta);
}

const Node& Tape::node(NodeId id) const {
  check(id);
  return nodes_[id.index];
}

double Tape::scalar(NodeId id) const {
  const Matrix& v = node(id).value;
  if (v.size() != 1) throw DimensionError("node " + std::to_string(id.index) + " is not scalar");
  return v(0, 0);
}

Matrix Tape::reevaluate(NodeId id) const {
  const Node& n = node(id);
  if (n.arity == 0) return n.value;
  const Matrix* a = &nodes_[n.parents[0].index].value;
  const Matrix* b = n.arity == 2 ? &nodes_[n.parents[1].index].value : nullptr;
  return evaluate(n.op, a, b, n.attr);
}

Vector backward(const Tape& tape, NodeId root, std::size_t parameter_count) {
  const Node& top = tape.node(root);
  if (top.value.size() != 1) {
    throw StructuralError("backward: root node " + std::to_string(root.index) + " is not scalar");
  }
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(parameter_count));
  if (!top.needs_grad) return grad;

  auto nodes = tape.nodes();
  std::vector<Matrix> adj(root.index + 1);
  adj[root.index] = Matrix::Ones(1, 1);

  for (std::size_t i = root.index + 1; i-- > 0;) {
    Matrix& g = adj[i];
    if (g.size() == 0) continue;
    const Node& n = nodes[i];

    auto parent = [&](int k) -> const Node& { return nodes[n.parents[k].index]; };
    auto send = [&](int k, Matrix&& delta) {
      if (parent(k).needs_grad) accumulate(adj[n.parents[k].index], std::move(delta));
    };

    switch (n.op) {
    case Op::constant:
    case Op::input:
      break;
    case Op::parameter: {
      const auto size = static_cast<std::size_t>(g.size());
      const std::size_t offset = n.flat_offset;
      if (offset + size > parameter_count) {
        throw StructuralError("backward: parameter leaf " + std::to_string(i) +
                              " lies outside the flat parameter vector");
      }
      grad.segment(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(size)) +=
          Eigen::Map<const Vector>(g.data(), g.size());
      break;
    }
    case Op::add:
      send(0, Matrix(g));
      send(1, std::move(g));
      break;
    case Op::sub:
      send(0, Matrix(g));
      send(1, -g);
      break;
    case Op::mul:
      if (parent(0).needs_grad) send(0, g.cwiseProduct(parent(1).value));
      if (parent(1).needs_grad) send(1, g.cwiseProduct(parent(0).value));
      break;
    case Op::scale:
      send(0, n.attr * g);
      break;
    case Op::shift:
      send(0, std::move(g));
      break;
    case Op::neg:
      send(0, -g);
      break;
    case Op::square:
      send(0, 2.0 * g.cwiseProduct(parent(0).value));
      break;
    case Op::tanh:
      send(0, (g.array() * (1.0 - n.value.array().square())).matrix());
      break;
    case Op::sin:
      send(0, (g.array() * parent(0).value.array().cos()).matrix());
      break;
    case Op::cos:
      send(0, (-g.array() * parent(0).value.array().sin()).matrix());
      break;
    case Op::exp:
      send(0, g.cwiseProduct(n.value));
      break;
    case Op::reciprocal:
      send(0, (-g.array() * n.value.array().square()).matrix());
      break;
    case Op::sum: {
      const Matrix& a = parent(0).value;
      send(0, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
      break;
    }
    case Op::mean: {
      const Matrix& a = parent(0).value;
      send(0, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / static_cast<double>(a.size())));
      break;
    }
    case Op::matmul:
      if (parent(0).needs_grad) {
        Matrix d(g.rows(), parent(1).value.rows());
        d.noalias() = g * parent(1).value.transpose();
        send(0, std::move(d));
      }
      if (parent(1).needs_grad) {
        Matrix d(parent(0).value.cols(), g.cols());
        d.noalias() = parent(0).value.transpose() * g;
        send(1, std::move(d));
      }
      break;
    case Op::add_bias:
      if (parent(1).needs_grad) send(1, g.rowwise().sum());
      send(0, std::move(g));
      break;
    }
    // Release the adjoint once consumed; parents have smaller ids.
    adj[i] = Matrix();
  }
  // Checking every node on the way down costs a fifth of the pass, so only
  // the result is checked and the culprit located afterwards.
  if (!grad.allFinite()) {
    for (std::size_t i = 0; i <= root.index; ++i) {
      if (nodes[i].needs_grad && !nodes[i].value.allFinite()) {
        throw NumericError(i, "non-finite value in backward pass");
      }
    }
    throw NumericError(root.index, "non-finite adjoint in backward pass");
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Var

Tape& Var::tape() const {
  if (!tape_) throw StructuralError("structural zero has no tape");
  return *tape_;
}

const Matrix& Var::value() const { return tape().value(id_); }

double Var::scalar() const { return tape().scalar(id_); }

namespace {

Tape& common_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw StructuralError("operands live on different tapes");
  return a.tape();
}

Var make_unary(Op op, const Var& a) { return {a.tape(), a.tape().unary(op, a.id())}; }

Var make_binary(Op op, const Var& a, const Var& b) {
  Tape& t = common_tape(a, b);
  return {t, t.binary(op, a.id(), b.id())};
}

} // namespace

Var operator+(const Var& a, const Var& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return make_binary(Op::add, a, b);
}

Var operator-(const Var& a, const Var& b) {
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return make_binary(Op::sub, a, b);
}

Var operator*(const Var& a, const Var& b) {
  if (a.is_zero() || b.is_zero()) return {};
  return make_binary(Op::mul, a, b);
}

Var operator-(const Var& a) {
  if (a.is_zero()) return {};
  return make_unary(Op::neg, a);
}

Var operator*(double alpha, const Var& a) {
  if (a.is_zero() || alpha == 0.0) return {};
  if (alpha == 1.0) return a;
  return {a.tape(), a.tape().scale(a.id(), alpha)};
}

Var operator+(const Var& a, double beta) {
  if (beta == 0.0) return a;
  return {a.tape(), a.tape().shift(a.id(), beta)};
}

Var operator-(const Var& a, double beta) { return a + (-beta); }

Var operator-(double beta, const Var& a) { return (-a) + beta; }

Var square(const Var& a) { return a.is_zero() ? Var{} : make_unary(Op::square, a); }
Var tanh(const Var& a) { return a.is_zero() ? Var{} : make_unary(Op::tanh, a); }
Var sin(const Var& a) { return a.is_zero() ? Var{} : make_unary(Op::sin, a); }
Var cos(const Var& a) { return make_unary(Op::cos, a); }
Var exp(const Var& a) { return make_unary(Op::exp, a); }
Var reciprocal(const Var& a) { return make_unary(Op::reciprocal, a); }
Var sum(const Var& a) { return a.is_zero() ? Var{} : make_unary(Op::sum, a); }
Var mean(const Var& a) { return a.is_zero() ? Var{} : make_unary(Op::mean, a); }

Var matmul(const Var& a, const Var& b) {
  if (a.is_zero() || b.is_zero()) return {};
  return make_binary(Op::matmul, a, b);
}

Var add_bias(const Var& a, const Var& bias) {
  if (bias.is_zero()) return a;
  return make_binary(Op::add_bias, a, bias);
}

Var apply(Op op, std::span<const Var> inputs, double attr) {
  const int arity = op_arity(op);
  if (arity == 0) throw StructuralError("apply: leaf ops are created through the tape");
  if (static_cast<int>(inputs.size()) != arity) {
    throw StructuralError(std::string(op_name(op)) + " expects " + std::to_string(arity) +
                          " inputs");
  }
  const Var& a = inputs[0];
  switch (op) {
  case Op::add: return a + inputs[1];
  case Op::sub: return a - inputs[1];
  case Op::mul: return a * inputs[1];
  case Op::matmul: return matmul(a, inputs[1]);
  case Op::add_bias: return add_bias(a, inputs[1]);
  case Op::scale: return attr * a;
  case Op::shift: return a + attr;
  case Op::neg: return -a;
  case Op::square: return square(a);
  case Op::tanh: return tanh(a);
  case Op::sin: return sin(a);
  case Op::cos: return cos(a);
  case Op::exp: return exp(a);
  case Op::reciprocal: return reciprocal(a);
  case Op::sum: return sum(a);
  case Op::mean: return mean(a);
  default: break;
  }
  throw StructuralError("apply: unsupported op");
}

} // namespace ropinn::ad
