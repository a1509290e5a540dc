#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcnet/grad_check.hpp"

namespace dcnet {

inline constexpr double kGradientTolerance = 1e-4;

struct GradSuiteEntry {
  std::string op;
  GradCheckReport report;
  bool passed() const { return report.checked > 0 && report.max_relative_error < kGradientTolerance; }
};

/// Finite-difference checks of each layer op on random inputs and of the full
/// DCNet loss on a 2-puzzle 32x32 batch (eval mode, and train mode with a fixed
/// dropout mask).
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed = 0);

}  // namespace dcnet
