#include "ropinn/autodiff/jet.hpp"

#include "ropinn/errors.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace ropinn::ad {

namespace {

// Restricted growth strings enumerate the set partitions of {0..n-1}.
void enumerate_partitions(std::size_t n, std::vector<std::size_t>& labels, std::size_t pos,
                          std::size_t blocks,
                          std::vector<std::vector<std::vector<std::size_t>>>& out) {
  if (pos == n) {
    std::vector<std::vector<std::size_t>> partition(blocks);
    for (std::size_t i = 0; i < n; ++i) partition[labels[i]].push_back(i);
    out.push_back(std::move(partition));
    return;
  }
  for (std::size_t b = 0; b <= blocks; ++b) {
    labels[pos] = b;
    enumerate_partitions(n, labels, pos + 1, std::max(blocks, b + 1), out);
  }
}

MultiIndex pick(const MultiIndex& index, const std::vector<std::size_t>& positions) {
  MultiIndex out;
  out.reserve(positions.size());
  for (std::size_t p : positions) out.push_back(index[p]);
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

JetLayout::JetLayout(std::size_t dim, int order, std::vector<bool> tracked)
    : dim_(dim), order_(order), tracked_(std::move(tracked)) {
  if (tracked_.size() != dim_) throw DimensionError("jet layout: tracked mask has wrong length");
  if (order_ < 0) throw CapabilityError("jet layout: negative order");

  std::vector<std::uint8_t> dirs;
  for (std::size_t j = 0; j < dim_; ++j) {
    if (tracked_[j]) dirs.push_back(static_cast<std::uint8_t>(j));
  }

  // Non-decreasing sequences over tracked directions, grouped by length.
  entries_.push_back({});
  std::vector<MultiIndex> frontier{{}};
  for (int k = 1; k <= order_; ++k) {
    std::vector<MultiIndex> next;
    for (const MultiIndex& m : frontier) {
      for (std::uint8_t d : dirs) {
        if (!m.empty() && d < m.back()) continue;
        MultiIndex grown = m;
        grown.push_back(d);
        next.push_back(grown);
      }
    }
    entries_.insert(entries_.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  for (std::size_t e = 0; e < entries_.size(); ++e) lookup_.emplace(entries_[e], e);

  partitions_.resize(entries_.size());
  splits_.resize(entries_.size());
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const MultiIndex& m = entries_[e];
    const std::size_t n = m.size();
    if (n == 0) continue;

    std::vector<std::vector<std::vector<std::size_t>>> raw;
    std::vector<std::size_t> labels(n, 0);
    enumerate_partitions(n, labels, 0, 0, raw);
    for (const auto& partition : raw) {
      std::vector<std::size_t> blocks;
      for (const auto& block : partition) blocks.push_back(lookup_.at(pick(m, block)));
      partitions_[e].push_back(std::move(blocks));
    }

    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      std::vector<std::size_t> in, out;
      for (std::size_t p = 0; p < n; ++p) ((mask >> p) & 1U ? in : out).push_back(p);
      splits_[e].emplace_back(lookup_.at(pick(m, in)), lookup_.at(pick(m, out)));
    }
  }
}

std::shared_ptr<const JetLayout> JetLayout::make(std::size_t dim, int order,
                                                 std::vector<bool> tracked) {
  return std::make_shared<const JetLayout>(dim, order, std::move(tracked));
}

std::shared_ptr<const JetLayout> JetLayout::full(std::size_t dim, int order) {
  return make(dim, order, std::vector<bool>(dim, true));
}

std::optional<std::size_t> JetLayout::find(MultiIndex index) const {
  std::sort(index.begin(), index.end());
  auto it = lookup_.find(index);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------
// Jet

Jet::Jet(std::shared_ptr<const JetLayout> layout, std::vector<Var> entries)
    : layout_(std::move(layout)), entries_(std::move(entries)) {
  if (!layout_) throw StructuralError("jet without layout");
  if (entries_.size() != layout_->size()) {
    throw StructuralError("jet: expected " + std::to_string(layout_->size()) + " entries, got " +
                          std::to_string(entries_.size()));
  }
  if (entries_[0].is_zero()) throw StructuralError("jet: value entry must be a node");
}

Jet Jet::constant(std::shared_ptr<const JetLayout> layout, Var value) {
  std::vector<Var> entries(layout->size());
  entries[0] = value;
  return {std::move(layout), std::move(entries)};
}

Jet Jet::input(Tape& tape, std::shared_ptr<const JetLayout> layout, const Matrix& points) {
  if (static_cast<std::size_t>(points.rows()) != layout->dim()) {
    throw DimensionError("jet input: expected " + std::to_string(layout->dim()) +
                         " coordinates per point, got " + std::to_string(points.rows()));
  }
  std::vector<Var> entries(layout->size());
  entries[0] = Var(tape, tape.input(points));
  if (layout->order() >= 1) {
    for (std::size_t j = 0; j < layout->dim(); ++j) {
      if (!layout->tracked(j)) continue;
      Matrix indicator = Matrix::Zero(points.rows(), points.cols());
      indicator.row(static_cast<Eigen::Index>(j)).setOnes();
      entries[*layout->find({static_cast<std::uint8_t>(j)})] =
          Var(tape, tape.constant(std::move(indicator)));
    }
  }
  return {std::move(layout), std::move(entries)};
}

const Var& Jet::at(const MultiIndex& index) const {
  for (std::uint8_t j : index) {
    if (j >= layout_->dim()) throw DimensionError("jet: direction out of range");
  }
  if (static_cast<int>(index.size()) > layout_->order()) {
    throw CapabilityError("jet: derivative of order " + std::to_string(index.size()) +
                          " requested from a jet of order " + std::to_string(layout_->order()));
  }
  auto e = layout_->find(index);
  if (!e) throw CapabilityError("jet: derivative direction is not tracked");
  return entries_[*e];
}

const Var& Jet::d(std::size_t j) const { return at({static_cast<std::uint8_t>(j)}); }

const Var& Jet::d(std::size_t j, std::size_t k) const {
  return at({static_cast<std::uint8_t>(j), static_cast<std::uint8_t>(k)});
}

const Var& Jet::d(std::size_t i, std::size_t j, std::size_t k) const {
  return at({static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(j),
             static_cast<std::uint8_t>(k)});
}

// ---------------------------------------------------------------------------
// Composition rules

namespace {

// k-th derivative of a unary primitive, either a node or a plain constant.
struct Factor {
  Var node;
  double constant = 0.0;

  Var times(const Var& v) const { return node ? node * v : constant * v; }
};

const JetLayout& shared_layout(std::span<const Jet> inputs) {
  const JetLayout& layout = inputs[0].layout();
  for (const Jet& j : inputs) {
    if (!(j.layout() == layout)) throw StructuralError("jet_compose: inputs have different layouts");
  }
  return layout;
}

Jet unary_rule(Op op, const Jet& a, double attr) {
  const JetLayout& layout = a.layout();
  const int order = layout.order();
  const Var& x = a.value();
  const Var y = apply(op, std::span<const Var>(&x, 1), attr);

  std::array<Factor, 4> f{};
  switch (op) {
  case Op::neg:
    f[1].constant = -1.0;
    break;
  case Op::scale:
    f[1].constant = attr;
    break;
  case Op::shift:
    f[1].constant = 1.0;
    break;
  case Op::square:
    f[1].node = 2.0 * x;
    f[2].constant = 2.0;
    break;
  case Op::tanh:
    if (order >= 1) f[1].node = 1.0 - square(y);
    if (order >= 2) f[2].node = -2.0 * (y * f[1].node);
    if (order >= 3) f[3].node = -2.0 * (square(f[1].node) + y * f[2].node);
    break;
  case Op::sin:
    if (order >= 1) f[1].node = cos(x);
    if (order >= 2) f[2].node = -y;
    if (order >= 3) f[3].node = -f[1].node;
    break;
  case Op::cos:
    if (order >= 1) f[1].node = -sin(x);
    if (order >= 2) f[2].node = -y;
    if (order >= 3) f[3].node = -f[1].node;
    break;
  case Op::exp:
    f[1].node = f[2].node = f[3].node = y;
    break;
  case Op::reciprocal: {
    if (order >= 1) {
      Var y2 = square(y);
      f[1].node = -y2;
      if (order >= 2) f[2].node = 2.0 * (y2 * y);
      if (order >= 3) f[3].node = -6.0 * square(y2);
    }
    break;
  }
  default:
    throw CapabilityError("jet_compose: no unary jet rule for " + std::string(op_name(op)));
  }

  std::vector<Var> out(layout.size());
  out[0] = y;
  for (std::size_t e = 1; e < layout.size(); ++e) {
    Var acc;
    for (const auto& blocks : layout.partitions(e)) {
      Var product = a.entry(blocks[0]);
      for (std::size_t b = 1; b < blocks.size() && product; ++b) product = product * a.entry(blocks[b]);
      if (!product) continue;
      acc = acc + f[blocks.size()].times(product);
    }
    out[e] = acc;
  }
  return {a.layout_ptr(), std::move(out)};
}

Jet reduction_rule(Op op, const Jet& a) {
  std::vector<Var> out(a.layout().size());
  for (std::size_t e = 0; e < out.size(); ++e) out[e] = op == Op::sum ? sum(a.entry(e)) : mean(a.entry(e));
  return {a.layout_ptr(), std::move(out)};
}

Jet binary_rule(Op op, const Jet& a, const Jet& b) {
  const JetLayout& layout = a.layout();
  std::vector<Var> out(layout.size());
  switch (op) {
  case Op::add:
  case Op::sub:
    for (std::size_t e = 0; e < out.size(); ++e) {
      out[e] = op == Op::add ? a.entry(e) + b.entry(e) : a.entry(e) - b.entry(e);
    }
    break;
  case Op::mul:
  case Op::matmul:
    out[0] = op == Op::mul ? a.value() * b.value() : matmul(a.value(), b.value());
    for (std::size_t e = 1; e < out.size(); ++e) {
      Var acc;
      for (auto [s, c] : layout.splits(e)) {
        acc = acc + (op == Op::mul ? a.entry(s) * b.entry(c) : matmul(a.entry(s), b.entry(c)));
      }
      out[e] = acc;
    }
    break;
  case Op::add_bias:
    out[0] = add_bias(a.value(), b.value());
    for (std::size_t e = 1; e < out.size(); ++e) {
      const Var& bias = b.entry(e);
      if (!bias) {
        out[e] = a.entry(e);
        continue;
      }
      Var base = a.entry(e);
      if (!base) {
        Tape& t = a.value().tape();
        base = Var(t, t.constant(Matrix::Zero(a.value().value().rows(), a.value().value().cols())));
      }
      out[e] = add_bias(base, bias);
    }
    break;
  default:
    throw CapabilityError("jet_compose: no binary jet rule for " + std::string(op_name(op)));
  }
  return {a.layout_ptr(), std::move(out)};
}

Jet compose(Op op, std::span<const Jet> inputs, double attr) {
  const int arity = op_arity(op);
  if (arity == 0) throw CapabilityError("jet_compose: leaf ops have no jet rule");
  if (static_cast<int>(inputs.size()) != arity) {
    throw StructuralError(std::string(op_name(op)) + " expects " + std::to_string(arity) +
                          " jet inputs");
  }
  shared_layout(inputs);
  if (arity == 2) return binary_rule(op, inputs[0], inputs[1]);
  if (op == Op::sum || op == Op::mean) return reduction_rule(op, inputs[0]);
  return unary_rule(op, inputs[0], attr);
}

Jet dispatch(Op op, std::initializer_list<Jet> inputs, double attr = 0.0) {
  std::span<const Jet> span(inputs.begin(), inputs.size());
  return span[0].order() <= 2 ? jet_compose(op, span, attr) : jet3_compose(op, span, attr);
}

} // namespace

bool jet3_enabled() noexcept {
#ifdef ROPINN_ENABLE_JET3
  return true;
#else
  return false;
#endif
}

Jet jet_compose(Op op, std::span<const Jet> inputs, double attr) {
  if (inputs.empty()) throw StructuralError("jet_compose: no inputs");
  if (inputs[0].order() > 2) throw CapabilityError("jet_compose: order above two needs jet3_compose");
  return compose(op, inputs, attr);
}

Jet jet3_compose(Op op, std::span<const Jet> inputs, double attr) {
  if (!jet3_enabled()) throw CapabilityError("third-order jets are disabled in this build");
  if (inputs.empty()) throw StructuralError("jet3_compose: no inputs");
  if (inputs[0].order() > 3) throw CapabilityError("jet3_compose: order above three");
  return compose(op, inputs, attr);
}

Jet operator+(const Jet& a, const Jet& b) { return dispatch(Op::add, {a, b}); }
Jet operator-(const Jet& a, const Jet& b) { return dispatch(Op::sub, {a, b}); }
Jet operator*(const Jet& a, const Jet& b) { return dispatch(Op::mul, {a, b}); }
Jet operator*(double alpha, const Jet& a) { return dispatch(Op::scale, {a}, alpha); }
Jet operator+(const Jet& a, double beta) { return dispatch(Op::shift, {a}, beta); }
Jet operator-(const Jet& a) { return dispatch(Op::neg, {a}); }
Jet square(const Jet& a) { return dispatch(Op::square, {a}); }
Jet tanh(const Jet& a) { return dispatch(Op::tanh, {a}); }
Jet sin(const Jet& a) { return dispatch(Op::sin, {a}); }
Jet cos(const Jet& a) { return dispatch(Op::cos, {a}); }
Jet exp(const Jet& a) { return dispatch(Op::exp, {a}); }
Jet reciprocal(const Jet& a) { return dispatch(Op::reciprocal, {a}); }

Jet matmul(const Var& weight, const Jet& a) {
  return dispatch(Op::matmul, {Jet::constant(a.layout_ptr(), weight), a});
}

Jet add_bias(const Jet& a, const Var& bias) {
  return dispatch(Op::add_bias, {a, Jet::constant(a.layout_ptr(), bias)});
}

} // namespace ropinn::ad
