#pragma once

// Forward propagation of input derivatives ("jets") whose entries are graph
// nodes.
//
// A Jet bundles a value with its partial derivatives up to a fixed order with
// respect to a batch of input points. Every entry is a Var on the tape, so a
// later reverse pass differentiates any derivative entry with respect to the
// parameters. Entries are matrices: column c of every entry belongs to input
// point c of the batch.
//
// Only the directions marked as tracked in the layout carry derivatives.
// Mixed partials are stored once per unordered multi-index, so the Hessian is
// symmetric by construction.

#include "ropinn/autodiff/tape.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace ropinn::ad {

/// Sorted list of input directions, e.g. {0, 1} is d^2/dx0 dx1.
using MultiIndex = std::vector<std::uint8_t>;

class JetLayout {
public:
  JetLayout(std::size_t dim, int order, std::vector<bool> tracked);

  static std::shared_ptr<const JetLayout> make(std::size_t dim, int order,
                                               std::vector<bool> tracked);
  /// Every direction tracked.
  static std::shared_ptr<const JetLayout> full(std::size_t dim, int order);

  std::size_t dim() const noexcept { return dim_; }
  int order() const noexcept { return order_; }
  bool tracked(std::size_t direction) const { return tracked_.at(direction); }
  std::size_t size() const noexcept { return entries_.size(); }
  const MultiIndex& index(std::size_t entry) const { return entries_.at(entry); }
  std::optional<std::size_t> find(MultiIndex index) const;

  /// Set partitions of an entry's multi-index positions, each partition given
  /// as the entry ids of its blocks. Drives the Faa di Bruno rule.
  const std::vector<std::vector<std::size_t>>& partitions(std::size_t entry) const {
    return partitions_.at(entry);
  }
  /// (subset, complement) entry pairs over all position subsets. Drives the
  /// Leibniz rule for bilinear ops.
  const std::vector<std::pair<std::size_t, std::size_t>>& splits(std::size_t entry) const {
    return splits_.at(entry);
  }

  bool operator==(const JetLayout& other) const {
    return dim_ == other.dim_ && order_ == other.order_ && tracked_ == other.tracked_;
  }

private:
  std::size_t dim_;
  int order_;
  std::vector<bool> tracked_;
  std::vector<MultiIndex> entries_;
  std::map<MultiIndex, std::size_t> lookup_;
  std::vector<std::vector<std::vector<std::size_t>>> partitions_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> splits_;
};

class Jet {
public:
  Jet(std::shared_ptr<const JetLayout> layout, std::vector<Var> entries);

  /// Value with every derivative identically zero.
  static Jet constant(std::shared_ptr<const JetLayout> layout, Var value);
  /// Identity jet of a batch of points (dim x N): value is the point matrix,
  /// the first derivative along direction j is the indicator of row j.
  static Jet input(Tape& tape, std::shared_ptr<const JetLayout> layout, const Matrix& points);

  const Var& value() const { return entries_[0]; }
  const Var& d(std::size_t j) const;
  const Var& d(std::size_t j, std::size_t k) const;
  const Var& d(std::size_t i, std::size_t j, std::size_t k) const;
  const Var& entry(std::size_t e) const { return entries_.at(e); }
  const Var& at(const MultiIndex& index) const;

  const JetLayout& layout() const noexcept { return *layout_; }
  const std::shared_ptr<const JetLayout>& layout_ptr() const noexcept { return layout_; }
  int order() const noexcept { return layout_->order(); }
  std::span<const Var> entries() const noexcept { return entries_; }

private:
  std::shared_ptr<const JetLayout> layout_;
  std::vector<Var> entries_;
};

/// Compose a primitive over jets of order at most two. Matmul and add_bias
/// take the weight or bias as a constant jet. Leaf ops and orders above two
/// raise CapabilityError.
Jet jet_compose(Op op, std::span<const Jet> inputs, double attr = 0.0);

/// Same as jet_compose, extended to third-order jets. Raises CapabilityError
/// when the build excludes order three.
Jet jet3_compose(Op op, std::span<const Jet> inputs, double attr = 0.0);

bool jet3_enabled() noexcept;

Jet operator+(const Jet& a, const Jet& b);
Jet operator-(const Jet& a, const Jet& b);
Jet operator*(const Jet& a, const Jet& b);
Jet operator*(double alpha, const Jet& a);
Jet operator+(const Jet& a, double beta);
Jet operator-(const Jet& a);
Jet square(const Jet& a);
Jet tanh(const Jet& a);
Jet sin(const Jet& a);
Jet cos(const Jet& a);
Jet exp(const Jet& a);
Jet reciprocal(const Jet& a);
Jet matmul(const Var& weight, const Jet& a);
Jet add_bias(const Jet& a, const Var& bias);

} // namespace ropinn::ad
