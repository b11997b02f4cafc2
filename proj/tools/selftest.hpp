#pragma once
#include <string>
#include <vector>

namespace nanotomo::cli {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Checks the library against independent oracles: brute-force Poisson
/// sums, closed-form curves, exact lines and file round trips.
std::vector<SelfTestResult> run_selftest();

} // namespace nanotomo::cli
