#pragma once

// The numbered release checks. Each returns a verdict plus a one-line
// account of what was measured; none of them throws on a failed comparison.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace ropinn::checks {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

CheckResult check_gradients();        // 1  tape gradients vs finite differences
CheckResult check_jets();             // 2  input derivatives vs finite differences
CheckResult check_analytic_residual();// 3  closed-form solutions satisfy the PDEs
CheckResult check_unbiased_region();  // 4  sampled region gradient mean vs quadrature
CheckResult check_spread_identity();  // 5  RMS deviation equals the std norm
CheckResult check_trust_region();     // 6  buffer law, sigma, clamps, r0 = 0 trace
CheckResult check_sigma_limit();      // 7  lr = 0: cross-iteration sigma = fixed-theta sigma
CheckResult check_optimizers();       // 8  L-BFGS and Adam oracles
CheckResult check_taylor_order();     // 10 bias of the sampled gradient is O(h)
CheckResult check_metrics();          // 11 zero and exact predictors

struct DeskTrendOptions {
  std::size_t iterations = 5000;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t threads = 1;
  std::filesystem::path output; // empty: a fresh directory under the system temp dir
};

CheckResult check_desk_trend(const DeskTrendOptions& options = {}); // 9

/// The fast checks (everything but 9), in id order.
std::vector<std::function<CheckResult()>> fast_checks();

/// "[PASS] 3 analytic residual (0.01 s): ..." style line.
std::string format(const CheckResult& result);

} // namespace ropinn::checks
