#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcnet/tensor.hpp"

namespace dcnet {

/// A named tensor owned by a model, plus its Adam moment estimates.
///
/// Non-trainable entries (batchnorm running statistics) share the same record
/// so that checkpoints capture them; the optimizer skips them.
struct Parameter {
  std::string name;
  Tensor tensor;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step = 0;
  bool trainable = true;

  Parameter(std::string name, Tensor tensor, bool trainable = true);
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update at step index `t` (1-based), then zeroes grads.
void adam_step(std::span<Parameter> params, const AdamConfig& config, std::uint64_t t);

void zero_grads(std::span<Parameter> params);

}  // namespace dcnet
