#include <doctest.h>

#include <cmath>

#include "dcnet/grad_check.hpp"
#include "dcnet/model.hpp"
#include "dcnet/rpm/generator.hpp"
#include "naive_ops.hpp"

using namespace dcnet;
using namespace dcnet::model;
using dcnet::testing::max_abs_diff;
using dcnet::testing::random_tensor;
using ops::Mode;

namespace {

DCNetConfig small_config(Ablation a = Ablation::full) {
  DCNetConfig c;
  c.image_size = 32;
  c.stem_channels = 4;
  c.feature_channels = 8;
  c.hidden = 16;
  c.ablation = a;
  c.zero_head = false;
  return c;
}

/// One train-mode pass so eval mode runs on non-trivial running statistics.
void warm_up(DCNet& net, const Tensor& panels) {
  Rng rng(0);
  net.forward(panels, Mode::train, rng);
}

Tensor slice(const Tensor& t, std::size_t i) { return ops::narrow(t, 0, i, 1); }

bool equal_data(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

/// Panels with the 3x3 context transposed; choices untouched.
Tensor transpose_context(const Tensor& panels) {
  Tensor out = panels.clone();
  const std::size_t px = panels.dim(2) * panels.dim(3);
  for (std::size_t p = 0; p < panels.dim(0); ++p)
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) {
        if (r * 3 + c >= 8) continue;
        std::copy_n(panels.data().data() + (p * 16 + c * 3 + r) * px, px,
                    out.data().data() + (p * 16 + r * 3 + c) * px);
      }
  return out;
}

Tensor permute_choices(const Tensor& panels, const std::array<int, 8>& perm) {
  Tensor out = panels.clone();
  const std::size_t px = panels.dim(2) * panels.dim(3);
  for (std::size_t p = 0; p < panels.dim(0); ++p)
    for (int k = 0; k < 8; ++k)
      std::copy_n(panels.data().data() + (p * 16 + 8 + perm[k]) * px, px,
                  out.data().data() + (p * 16 + 8 + k) * px);
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  DCNetConfig c;
  CHECK(c.mlp_input_dim() == 512);
  c.image_size = 30;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.image_size = 32;
  c.dropout_p = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(parse_ablation("no_choice_contrast") == Ablation::no_choice_contrast);
  CHECK_FALSE(parse_ablation("none"));
}

TEST_CASE("shape contract at 96 and 32 with the default channel plan") {
  DCNetConfig c;
  c.image_size = 96;
  DCNet net(c, 1);
  Rng rng(1);
  CHECK(net.encode(random_tensor({1, 3, 96, 96}, rng, 0, 1), Mode::eval).shape() == Shape{1, 128, 24, 24});
  const auto puzzle = rpm::generate_puzzle(rpm::Config::center, 96, 3);
  CHECK(net.forward(panels_tensor({&puzzle, 1}), Mode::eval, rng).shape() == Shape{1, 8});

  c.image_size = 32;
  DCNet small(c, 1);
  CHECK(small.encode(random_tensor({2, 3, 32, 32}, rng, 0, 1), Mode::eval).shape() == Shape{2, 128, 8, 8});
  CHECK(small.config().mlp_input_dim() == 512);
}

TEST_CASE("form_triples follows the row/column mapping") {
  Rng rng(2);
  const Tensor panels = random_tensor({2, 16, 16, 16}, rng, 0, 1);
  const TripleStack t = form_triples(panels);
  CHECK(t.rows.shape() == Shape{20, 3, 16, 16});
  auto panel = [&](std::size_t p, std::size_t i) { return ops::reshape(ops::narrow(slice(panels, p), 1, i, 1), {16, 16}); };
  auto channel = [&](const Tensor& s, std::size_t p, std::size_t j, std::size_t k) {
    return ops::reshape(ops::narrow(slice(s, p * 10 + j), 1, k, 1), {16, 16});
  };
  for (std::size_t p = 0; p < 2; ++p) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(equal_data(channel(t.rows, p, 0, k), panel(p, k)));
      CHECK(equal_data(channel(t.rows, p, 1, k), panel(p, 3 + k)));
      CHECK(equal_data(channel(t.cols, p, 0, k), panel(p, 3 * k)));
      CHECK(equal_data(channel(t.cols, p, 1, k), panel(p, 3 * k + 1)));
    }
    for (std::size_t j = 2; j < 10; ++j) {
      // Candidate rows/columns end with choice j - 2.
      CHECK(equal_data(channel(t.rows, p, j, 0), panel(p, 6)));
      CHECK(equal_data(channel(t.rows, p, j, 1), panel(p, 7)));
      CHECK(equal_data(channel(t.rows, p, j, 2), panel(p, 8 + j - 2)));
      CHECK(equal_data(channel(t.cols, p, j, 0), panel(p, 2)));
      CHECK(equal_data(channel(t.cols, p, j, 1), panel(p, 5)));
      CHECK(equal_data(channel(t.cols, p, j, 2), panel(p, 8 + j - 2)));
    }
  }
  // Transposing the context swaps the two streams.
  const TripleStack tt = form_triples(transpose_context(panels));
  CHECK(equal_data(tt.rows, t.cols));
  CHECK(equal_data(tt.cols, t.rows));
}

TEST_CASE("panels_tensor scales bytes to [0, 1]") {
  const auto puzzle = rpm::generate_puzzle(rpm::Config::center, 16, 4);
  const Tensor t = panels_tensor({&puzzle, 1});
  CHECK(t.shape() == Shape{1, 16, 16, 16});
  CHECK(t.data()[0] == puzzle.context[0].pixels[0] / 255.0);
  CHECK(t.data()[8 * 256 + 17] == puzzle.choices[0].pixels[17] / 255.0);
}

TEST_CASE("encode is per-example in eval mode") {
  DCNet net(small_config(), 3);
  Rng rng(3);
  const Tensor x = random_tensor({5, 3, 32, 32}, rng, 0, 1);
  warm_up(net, panels_tensor(rpm::generate_dataset(2, rpm::Config::center, 32, 1)));
  const Tensor batched = net.encode(x, Mode::eval);
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(max_abs_diff(net.encode(slice(x, i), Mode::eval), slice(batched, i)) <= 1e-12);
}

TEST_CASE("rule contrast") {
  DCNet net(small_config(), 4);
  Rng rng(4);
  SUBCASE("candidates at the context centroid map to exact zero") {
    Tensor f = random_tensor({2, 10, 3, 2, 2}, rng);
    const std::size_t block = 12;
    for (std::size_t p = 0; p < 2; ++p)
      for (std::size_t j = 2; j < 10; ++j)
        for (std::size_t e = 0; e < block; ++e) {
          const double a = f.data()[(p * 10 + 0) * block + e], b = f.data()[(p * 10 + 1) * block + e];
          f.data()[(p * 10 + j) * block + e] = 0.5 * (a + b);
        }
    const Tensor g = net.rule_contrast(f);
    for (double v : g.data()) CHECK(v == 0.0);
  }
  SUBCASE("matches direct arithmetic") {
    const Tensor f = random_tensor({3, 10, 2, 3, 3}, rng);
    const Tensor g = net.rule_contrast(f);
    CHECK(g.shape() == Shape{3, 8, 2, 3, 3});
    const std::size_t block = 18;
    double worst = 0;
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t e = 0; e < block; ++e) {
          const double f1 = f.data()[(p * 10) * block + e], f2 = f.data()[(p * 10 + 1) * block + e];
          const double expect = f.data()[(p * 10 + j + 2) * block + e] - (f1 + f2) / 2;
          worst = std::max(worst, std::abs(g.data()[(p * 8 + j) * block + e] - expect));
        }
    CHECK(worst <= 1e-15);
  }
  SUBCASE("equal context rows subtract that row") {
    Tensor f = random_tensor({1, 10, 1, 2, 2}, rng);
    std::copy_n(f.data().begin(), 4, f.data().begin() + 4);
    const Tensor g = net.rule_contrast(f);
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t e = 0; e < 4; ++e)
        CHECK(g.data()[j * 4 + e] == f.data()[(j + 2) * 4 + e] - f.data()[e]);
  }
  SUBCASE("ablation passes candidates through") {
    DCNet rc(small_config(Ablation::no_rule_contrast), 4);
    const Tensor f = random_tensor({1, 10, 1, 2, 2}, rng);
    CHECK(equal_data(rc.rule_contrast(f), ops::narrow(f, 1, 2, 8)));
  }
}

TEST_CASE("choice contrast") {
  Rng rng(5);
  SUBCASE("identity phi: identical candidates vanish, candidates sum to zero") {
    DCNetConfig c = small_config();
    c.identity_phi = true;
    DCNet net(c, 5);
    Tensor same = random_tensor({1, 1, 8, 8, 8}, rng);
    const Tensor vanished = net.choice_contrast(ops::expand(same, 1, 8), Mode::eval);
    for (double v : vanished.data()) CHECK(v == 0.0);

    const Tensor g = random_tensor({3, 8, 8, 4, 4}, rng);
    const Tensor h = net.choice_contrast(g, Mode::eval);
    const Tensor sums = ops::mean_over(h, 1);
    for (double v : sums.data()) CHECK(std::abs(v) <= 1e-12);
  }
  SUBCASE("real phi in eval mode matches an independent evaluation") {
    DCNet net(small_config(), 6);
    warm_up(net, panels_tensor(rpm::generate_dataset(2, rpm::Config::center, 32, 2)));
    const std::size_t Q = 2, C = 8, H = 4;
    const Tensor g = random_tensor({Q, 8, C, H, H}, rng);
    const Tensor h = net.choice_contrast(g, Mode::eval);

    Tensor mean({Q, C, H, H});
    const std::size_t block = C * H * H;
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t e = 0; e < block; ++e) {
        double s = 0;
        for (std::size_t j = 0; j < 8; ++j) s += g.data()[(q * 8 + j) * block + e];
        mean.data()[q * block + e] = s / 8;
      }
    const Tensor conv = dcnet::testing::naive_conv2d(mean, net.parameter("phi.conv.weight").tensor, Tensor(), 1, 1);
    const Tensor phi = dcnet::testing::naive_batchnorm_eval(
        conv, net.parameter("phi.bn.weight").tensor, net.parameter("phi.bn.bias").tensor,
        net.parameter("phi.bn.running_mean").tensor, net.parameter("phi.bn.running_var").tensor,
        ops::kBatchNormEps);
    double worst = 0;
    for (std::size_t q = 0; q < Q; ++q)
      for (std::size_t j = 0; j < 8; ++j)
        for (std::size_t e = 0; e < block; ++e)
          worst = std::max(worst, std::abs(h.data()[(q * 8 + j) * block + e] -
                                           (g.data()[(q * 8 + j) * block + e] - phi.data()[q * block + e])));
    CHECK(worst <= 1e-12);
  }
  SUBCASE("ablation returns g and drops phi parameters") {
    DCNet cc(small_config(Ablation::no_choice_contrast), 7);
    const Tensor g = random_tensor({1, 8, 8, 2, 2}, rng);
    CHECK(equal_data(cc.choice_contrast(g, Mode::train), g));
    CHECK_THROWS(cc.parameter("phi.conv.weight"));
    DCNet full(small_config(), 7);
    CHECK(full.parameters().size() == cc.parameters().size() + 5);
    for (std::size_t i = 0; i < cc.parameters().size(); ++i) {
      CHECK(cc.parameters()[i].name == full.parameters()[i].name);
      CHECK(equal_data(cc.parameters()[i].tensor, full.parameters()[i].tensor));
    }
  }
}

TEST_CASE("zero head scores every choice 0 and predict picks index 0") {
  DCNetConfig c = small_config();
  c.zero_head = true;
  DCNet net(c, 8);
  Rng rng(8);
  const auto puzzles = rpm::generate_dataset(3, rpm::Config::center, 32, 3);
  const Tensor s = net.forward(panels_tensor(puzzles), Mode::train, rng);
  for (double v : s.data()) CHECK(v == 0.0);
  CHECK(predict(s) == std::vector<int>{0, 0, 0});
  Tensor ties({1, 8}, {1, 3, 3, 0, 0, 0, 0, 0});
  CHECK(predict(ties) == std::vector<int>{1});
}

TEST_CASE("eval-mode invariants") {
  DCNet net(small_config(), 9);
  Rng rng(9);
  const auto puzzles = rpm::generate_dataset(8, rpm::Config::center, 32, 9);
  const Tensor panels = panels_tensor(puzzles);
  warm_up(net, panels);
  const Tensor scores = net.forward(panels, Mode::eval, rng);

  SUBCASE("candidate permutation equivariance") {
    const std::array<int, 8> perm{3, 7, 0, 5, 1, 6, 2, 4};
    const Tensor permuted = net.forward(permute_choices(panels, perm), Mode::eval, rng);
    double worst = 0;
    for (std::size_t p = 0; p < 8; ++p)
      for (int k = 0; k < 8; ++k)
        worst = std::max(worst, std::abs(permuted.data()[p * 8 + k] - scores.data()[p * 8 + perm[k]]));
    CHECK(worst <= 1e-12);
  }
  SUBCASE("context transposition invariance") {
    CHECK(max_abs_diff(net.forward(transpose_context(panels), Mode::eval, rng), scores) <= 1e-9);
  }
  SUBCASE("batch of one matches its slot in the batch") {
    for (std::size_t p = 0; p < 8; p += 3)
      CHECK(max_abs_diff(net.forward(slice(panels, p), Mode::eval, rng), slice(scores, p)) <= 1e-12);
  }
  SUBCASE("repeatable") { CHECK(equal_data(net.forward(panels, Mode::eval, rng), scores)); }
}

TEST_CASE("every parameter receives gradient after one training step") {
  DCNetConfig c = small_config();
  c.zero_head = true;
  DCNet net(c, 10);
  Rng rng(10);
  const auto puzzles = rpm::generate_dataset(4, rpm::Config::center, 32, 10);
  const Tensor panels = panels_tensor(puzzles);
  Tensor targets({4, 8});
  for (std::size_t i = 0; i < 4; ++i) targets.data()[i * 8 + puzzles[i].answer] = 1.0;
  for (std::uint64_t step = 1; step <= 2; ++step) {
    Tape tape;
    tape.backward(ops::bce_with_logits(net.forward(panels, Mode::train, rng), targets));
    if (step == 2) {
      for (const Parameter& p : net.parameters()) {
        if (!p.trainable) continue;
        double norm = 0;
        for (double g : p.tensor.grad()) norm += g * g;
        CHECK_MESSAGE(norm > 0.0, p.name);
      }
    }
    adam_step(net.parameters(), AdamConfig{}, step);
  }
}

TEST_CASE("composed loss gradient matches finite differences") {
  DCNet net(small_config(), 11);
  const auto puzzles = rpm::generate_dataset(2, rpm::Config::center, 32, 11);
  const Tensor panels = panels_tensor(puzzles);
  warm_up(net, panels);
  Tensor targets({2, 8});
  targets.data()[puzzles[0].answer] = 1.0;
  targets.data()[8 + puzzles[1].answer] = 1.0;

  std::vector<Tensor> inputs;
  for (const Parameter& p : net.parameters())
    if (p.trainable) inputs.push_back(p.tensor);
  for (Mode mode : {Mode::eval, Mode::train}) {
    // The dropout generator is re-seeded per call, so train mode uses one fixed mask.
    const auto f = [&](std::span<const Tensor>) {
      Rng rng(0);
      return ops::bce_with_logits(net.forward(panels, mode, rng), targets);
    };
    GradCheckOptions opt;
    opt.max_coords_per_input = 6;
    const auto report = grad_check(f, inputs, opt);
    CHECK(report.max_relative_error < 1e-4);
    CHECK(report.checked > inputs.size() * 3);
  }
}
