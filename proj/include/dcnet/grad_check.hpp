#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dcnet/tensor.hpp"

namespace dcnet {

struct GradCheckOptions {
  double step = 1e-5;
  /// Inputs with more elements than this are checked on a random sample.
  std::size_t max_coords_per_input = 64;
  std::uint64_t seed = 0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Coordinates with a non-differentiable point within the step (maxpool ties, relu
  /// crossings), detected by comparing differences at step and step/2.
  std::size_t excluded = 0;
};

/// Compares reverse-mode gradients of scalar `f` against central differences.
///
/// Relative error per coordinate is |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
/// `f` must be deterministic; it is called once under a tape and then without one.
GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::vector<Tensor> inputs, const GradCheckOptions& options = {});

}  // namespace dcnet
