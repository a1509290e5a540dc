#include "dcnet/gradient_suite.hpp"

#include "dcnet/model.hpp"
#include "dcnet/ops.hpp"
#include "dcnet/random.hpp"
#include "dcnet/rpm/generator.hpp"

namespace dcnet {

namespace {

using Fn = std::function<Tensor(std::span<const Tensor>)>;
using ops::Mode;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

/// Scalar probe <y, r> with a fixed random r, so every output element matters.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum_all(ops::mul(y, random_tensor(y.shape(), rng)));
}

GradSuiteEntry composed_loss(std::uint64_t seed, Mode mode) {
  model::DCNetConfig config;
  config.image_size = 32;
  config.stem_channels = 4;
  config.feature_channels = 8;
  config.hidden = 16;
  config.zero_head = false;
  model::DCNet net(config, seed);
  const auto puzzles = rpm::generate_dataset(2, rpm::Config::center, 32, seed, 1);
  const Tensor panels = model::panels_tensor(puzzles);
  {
    // One train pass gives the running statistics non-trivial values.
    Rng rng(seed);
    net.forward(panels, Mode::train, rng);
  }
  Tensor targets({2, 8});
  targets.data()[static_cast<std::size_t>(puzzles[0].answer)] = 1.0;
  targets.data()[8 + static_cast<std::size_t>(puzzles[1].answer)] = 1.0;

  std::vector<Tensor> inputs;
  for (const Parameter& p : net.parameters())
    if (p.trainable) inputs.push_back(p.tensor);
  const Fn f = [&](std::span<const Tensor>) {
    Rng mask_rng(seed);
    return ops::bce_with_logits(net.forward(panels, mode, mask_rng), targets);
  };
  GradCheckOptions options;
  options.max_coords_per_input = 6;
  options.seed = seed;
  return {mode == Mode::eval ? "dcnet_loss (eval)" : "dcnet_loss (train, fixed dropout mask)",
          grad_check(f, inputs, options)};
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  GradCheckOptions options;
  options.seed = seed;
  std::vector<GradSuiteEntry> out;
  auto add = [&](std::string op, const Fn& f, std::vector<Tensor> inputs) {
    out.push_back({std::move(op), grad_check(f, std::move(inputs), options)});
  };

  add("conv2d",
      [](std::span<const Tensor> in) { return probe(ops::conv2d(in[0], in[1], in[2], 2, 1), 1); },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)});

  ops::RunningStats stats = ops::RunningStats::identity(3);
  for (std::size_t c = 0; c < 3; ++c) {
    stats.mean.data()[c] = 0.5 * uniform01(rng) - 0.25;
    stats.var.data()[c] = 0.5 + uniform01(rng);
  }
  add("batchnorm2d (eval)",
      [&stats](std::span<const Tensor> in) {
        return probe(ops::batchnorm2d(in[0], in[1], in[2], stats, Mode::eval), 2);
      },
      {random_tensor({3, 3, 4, 4}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  add("batchnorm2d (train)",
      [](std::span<const Tensor> in) {
        auto scratch = ops::RunningStats::identity(3);
        return probe(ops::batchnorm2d(in[0], in[1], in[2], scratch, Mode::train), 3);
      },
      {random_tensor({3, 3, 4, 4}, rng), random_tensor({3}, rng), random_tensor({3}, rng)});
  add("maxpool2d",
      [](std::span<const Tensor> in) { return probe(ops::maxpool2d(in[0], 3, 2, 1), 4); },
      {random_tensor({2, 2, 8, 8}, rng)});
  add("linear",
      [](std::span<const Tensor> in) { return probe(ops::linear(in[0], in[1], in[2]), 5); },
      {random_tensor({3, 5}, rng), random_tensor({5, 4}, rng), random_tensor({4}, rng)});
  add("relu", [](std::span<const Tensor> in) { return probe(ops::relu(in[0]), 6); },
      {random_tensor({4, 6}, rng)});
  add("sigmoid", [](std::span<const Tensor> in) { return probe(ops::sigmoid(in[0]), 7); },
      {random_tensor({4, 6}, rng, -4.0, 4.0)});
  add("dropout (eval)",
      [](std::span<const Tensor> in) {
        Rng unused(0);
        return probe(ops::dropout(in[0], 0.5, Mode::eval, unused), 8);
      },
      {random_tensor({4, 6}, rng)});

  Tensor targets({2, 8});
  targets.data()[3] = 1.0;
  targets.data()[8 + 6] = 1.0;
  add("bce_with_logits",
      [targets](std::span<const Tensor> in) { return ops::bce_with_logits(in[0], targets); },
      {random_tensor({2, 8}, rng, -4.0, 4.0)});

  out.push_back(composed_loss(seed, Mode::eval));
  out.push_back(composed_loss(seed, Mode::train));
  return out;
}

}  // namespace dcnet
