#pragma once

#include "ropinn/model.hpp"

#include <random>

namespace test {

// Scalar entry of a jet component; structural zeros read as 0.
inline double at(const ropinn::ad::Var& v, Eigen::Index row = 0, Eigen::Index col = 0) {
  return v.is_zero() ? 0.0 : v.value()(row, col);
}

inline ropinn::ModelConfig net(std::vector<std::size_t> widths,
                               ropinn::Arch arch = ropinn::Arch::mlp_tanh) {
  return {arch, std::move(widths), 0};
}

// Glorot weights and uniform biases, so that no coordinate is special.
inline ropinn::FlatParams random_params(const ropinn::ModelConfig& config, std::uint64_t seed) {
  ropinn::ModelConfig c = config;
  c.init_seed = seed;
  ropinn::FlatParams p = ropinn::init(c);
  std::mt19937_64 rng(seed + 77);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t l = 0; l + 1 < c.layer_widths.size(); ++l) {
    auto b = ropinn::bias(p, l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
  }
  return p;
}

// U(lo, hi) entries from a fixed seed, so a test sees the same points in any order.
inline Eigen::MatrixXd uniform(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                               double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (auto& e : m.reshaped()) e = u(rng);
  return m;
}

} // namespace test
