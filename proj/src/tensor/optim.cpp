#include "dcnet/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dcnet {

Parameter::Parameter(std::string name_, Tensor tensor_, bool trainable_)
    : name(std::move(name_)),
      tensor(std::move(tensor_)),
      adam_m(tensor.numel(), 0.0),
      adam_v(tensor.numel(), 0.0),
      trainable(trainable_) {
  tensor.set_requires_grad(trainable);
}

void adam_step(std::span<Parameter> params, const AdamConfig& config, std::uint64_t t) {
  if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (Parameter& p : params) {
    if (!p.trainable) continue;
    p.step = t;
    if (!p.tensor.has_grad()) continue;
    auto w = p.tensor.data();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.adam_m[i] = config.beta1 * p.adam_m[i] + (1.0 - config.beta1) * g[i];
      p.adam_v[i] = config.beta2 * p.adam_v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = p.adam_m[i] / correction1;
      const double v_hat = p.adam_v[i] / correction2;
      w[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
    p.tensor.zero_grad();
  }
}

void zero_grads(std::span<Parameter> params) {
  for (Parameter& p : params) p.tensor.zero_grad();
}

}  // namespace dcnet
