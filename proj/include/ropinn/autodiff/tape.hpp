#pragma once

// Append-only computation graph over dense matrices.
//
// Every node holds an Eigen matrix; a scalar is the 1x1 case. Values are
// computed eagerly when a node is appended, so a node's parents always have
// smaller ids and the node list is already in topological order. Reverse
// mode walks the list backwards (descending id) and accumulates adjoints.

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace ropinn::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Op : std::uint8_t {
  constant,
  parameter,
  input,
  add,
  sub,
  mul,        // elementwise product
  scale,      // alpha * a
  shift,      // a + beta
  neg,
  square,
  tanh,
  sin,
  cos,
  exp,
  reciprocal,
  sum,        // all entries -> 1x1
  mean,       // all entries -> 1x1
  matmul,
  add_bias,   // a + b * 1^T, b a column
};

std::string_view op_name(Op op) noexcept;
int op_arity(Op op) noexcept;

struct NodeId {
  static constexpr std::uint32_t invalid_index = UINT32_MAX;
  std::uint32_t index = invalid_index;

  constexpr bool valid() const noexcept { return index != invalid_index; }
  friend constexpr auto operator<=>(NodeId, NodeId) = default;
};

struct Node {
  NodeId id;
  Op op = Op::constant;
  std::uint8_t arity = 0;
  std::array<NodeId, 2> parents{};
  double attr = 0.0; // scale factor or shift amount
  std::size_t flat_offset = 0; // parameter leaves only
  bool needs_grad = false;
  Matrix value;
};

/// Parameter leaf entries map column-major onto [offset, offset + rows*cols).
struct ParameterLeaf {
  NodeId node;
  std::size_t offset = 0;
};

class Tape {
public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  NodeId constant(Matrix value);
  NodeId constant(double value);
  NodeId parameter(Matrix value, std::size_t flat_offset);
  NodeId input(Matrix value);

  NodeId unary(Op op, NodeId a);
  NodeId binary(Op op, NodeId a, NodeId b);
  NodeId scale(NodeId a, double alpha);
  NodeId shift(NodeId a, double beta);

  const Node& node(NodeId id) const;
  const Matrix& value(NodeId id) const { return node(id).value; }
  /// Value of a 1x1 node.
  double scalar(NodeId id) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  std::span<const Node> nodes() const noexcept { return nodes_; }
  std::span<const ParameterLeaf> parameter_leaves() const noexcept { return leaves_; }
  /// One past the largest flat coordinate touched by a parameter leaf.
  std::size_t parameter_extent() const noexcept { return extent_; }

  /// Recompute node values from their parents. Used to verify determinism.
  Matrix reevaluate(NodeId id) const;

private:
  NodeId push(Op op, std::uint8_t arity, std::array<NodeId, 2> parents, double attr, Matrix value);
  void check(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<ParameterLeaf> leaves_;
  std::size_t extent_ = 0;
};

/// Gradient of a scalar (1x1) root with respect to every flat parameter
/// coordinate. `parameter_count` sizes the result; leaves beyond it are a
/// structural error.
Vector backward(const Tape& tape, NodeId root, std::size_t parameter_count);

inline Vector backward(const Tape& tape, NodeId root) {
  return backward(tape, root, tape.parameter_extent());
}

/// Handle to a node, with arithmetic that appends to the owning tape.
///
/// A default constructed Var is a structural zero: it owns no node, and the
/// linear operators and products below fold it away instead of emitting
/// nodes. Jet propagation relies on this to skip derivative entries that are
/// identically zero.
class Var {
public:
  Var() = default;
  Var(Tape& tape, NodeId id) : tape_(&tape), id_(id) {}

  bool is_zero() const noexcept { return tape_ == nullptr; }
  explicit operator bool() const noexcept { return !is_zero(); }

  Tape& tape() const;
  NodeId id() const noexcept { return id_; }
  const Matrix& value() const;
  double scalar() const;

private:
  Tape* tape_ = nullptr;
  NodeId id_{};
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b); // elementwise
Var operator-(const Var& a);
Var operator*(double alpha, const Var& a);
Var operator+(const Var& a, double beta);
Var operator-(const Var& a, double beta);
Var operator-(double beta, const Var& a);

Var square(const Var& a);
Var tanh(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var reciprocal(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var matmul(const Var& a, const Var& b);
Var add_bias(const Var& a, const Var& bias);

/// Generic dispatch by op tag; `attr` is used by scale and shift only.
Var apply(Op op, std::span<const Var> inputs, double attr = 0.0);

} // namespace ropinn::ad
