#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dcnet/dataset_io.hpp"
#include "dcnet/rpm/generator.hpp"
#include "dcnet/trainer.hpp"

using namespace dcnet;
using namespace dcnet::trainer;
using model::Ablation;
using model::DCNetConfig;

namespace {

DCNetConfig tiny_config() {
  DCNetConfig c;
  c.image_size = 32;
  c.stem_channels = 4;
  c.feature_channels = 8;
  c.hidden = 16;
  return c;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.batch_size = 8;
  t.epochs = epochs;
  t.seed = 3;
  return t;
}

const std::vector<rpm::Puzzle>& small_train() {
  static const auto data = rpm::generate_dataset(40, rpm::Config::center, 32, 11);
  return data;
}

const std::vector<rpm::Puzzle>& small_test() {
  static const auto data = rpm::generate_dataset(16, rpm::Config::center, 32, 12);
  return data;
}

}  // namespace

TEST_CASE("make_targets") {
  const std::vector<int> one{3};
  const Tensor t = make_targets(one);
  CHECK(t.shape() == Shape{1, 8});
  for (std::size_t j = 0; j < 8; ++j) CHECK(t.data()[j] == (j == 3 ? 1.0 : 0.0));

  const std::vector<int> two{0, 7};
  const Tensor u = make_targets(two);
  for (std::size_t r = 0; r < 2; ++r) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 8; ++j) sum += u.data()[r * 8 + j];
    CHECK(sum == 1.0);
  }
  CHECK(u.data()[0] == 1.0);
  CHECK(u.data()[15] == 1.0);

  const std::vector<int> bad{8};
  CHECK_THROWS_AS(make_targets(bad), std::out_of_range);
  const std::vector<int> negative{-1};
  CHECK_THROWS_AS(make_targets(negative), std::out_of_range);
}

TEST_CASE("config validation") {
  TrainConfig t;
  t.batch_size = 1;
  CHECK_THROWS_AS(t.validate(), model::ConfigError);
  t.batch_size = 2;
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), model::ConfigError);
  t.lr = 1e-3;
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("zero head gives 8 ln 2 per puzzle before the first update") {
  const auto net = make_model(tiny_config(), 5);
  std::uint64_t step = 0;
  const EpochStats s = train_epoch(*net, small_train(), tiny_train(1), 0, step);
  CHECK(std::abs(s.first_batch_loss - 8.0 * std::numbers::ln2) <= 1e-6);
  CHECK(step == 5);
  CHECK(s.puzzles == 40);
}

TEST_CASE("training is deterministic and the loss falls") {
  auto run = [] {
    const auto net = make_model(tiny_config(), 9);
    return train(*net, small_train(), small_test(), tiny_train(20));
  };
  const RunMetrics a = run();
  const RunMetrics b = run();
  REQUIRE(a.epochs.size() == 20);
  for (std::size_t e = 0; e < 20; ++e) {
    CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);
    CHECK(a.epochs[e].train_acc == b.epochs[e].train_acc);
    CHECK(a.epochs[e].test_acc == b.epochs[e].test_acc);
  }
  CHECK(a.epochs.back().train_loss < a.epochs.front().train_loss);
}

TEST_CASE("metrics csv") {
  RunMetrics m;
  m.epochs.push_back({0, 5.5, 0.125, 0.25, 1.5});
  m.epochs.push_back({1, 4.0, 0.5, std::nullopt, 2.0});
  CHECK(m.to_csv() == "epoch,train_loss,train_acc,test_acc,seconds\n0,5.5,0.125,0.25,1.500\n1,4,0.5,,2.000\n");
  CHECK(m.final_test_acc() == 0.25);

  const auto net = make_model(tiny_config(), 1);
  TrainConfig t = tiny_train(3);
  t.eval_every = 2;
  const RunMetrics r = train(*net, small_train(), small_test(), t);
  CHECK(!r.epochs[0].test_acc);
  CHECK(r.epochs[1].test_acc);
  CHECK(r.epochs[2].test_acc);
}

TEST_CASE("evaluate") {
  SUBCASE("untrained zero head picks index 0, near chance on balanced data") {
    const auto data = rpm::generate_dataset(1000, rpm::Config::center, 16, 21);
    DCNetConfig c = tiny_config();
    c.image_size = 16;
    const auto net = make_model(c, 2);
    const double acc = evaluate(*net, data);
    std::size_t zeros = 0;
    for (const auto& p : data) zeros += p.answer == 0;
    CHECK(acc == static_cast<double>(zeros) / 1000.0);
    CHECK(acc >= 0.09);
    CHECK(acc <= 0.16);
  }
  SUBCASE("agrees with a recount and repeats exactly") {
    const auto net = make_model(tiny_config(), 4);
    std::uint64_t step = 0;
    train_epoch(*net, small_train(), tiny_train(1), 0, step);
    const std::vector<int> p = predictions(*net, small_test(), 5);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < p.size(); ++i) correct += p[i] == small_test()[i].answer;
    const double acc = evaluate(*net, small_test());
    CHECK(acc == static_cast<double>(correct) / static_cast<double>(p.size()));
    CHECK(evaluate(*net, small_test(), 3) == acc);
  }
  SUBCASE("empty data is an error") {
    const auto net = make_model(tiny_config(), 4);
    const std::vector<rpm::Puzzle> none;
    CHECK_THROWS_AS(evaluate(*net, none), std::invalid_argument);
  }
}

TEST_CASE("divergence guard") {
  const auto net = make_model(tiny_config(), 6);
  net->parameter("head.fc2.bias").tensor.data()[0] = 2e4;
  std::uint64_t step = 0;
  CHECK_THROWS_AS(train_epoch(*net, small_train(), tiny_train(1), 0, step), NumericalError);
}

TEST_CASE("ablation table") {
  const std::vector<Ablation> variants{Ablation::full, Ablation::no_choice_contrast};
  const std::vector<std::uint64_t> seeds{1, 2};
  const AblationTable t =
      run_ablation(variants, tiny_config(), tiny_train(1), small_train(), small_test(), seeds, 2);
  REQUIRE(t.rows.size() == variants.size() * seeds.size() + variants.size());
  CHECK(t.rows[0].variant == Ablation::full);
  CHECK(t.rows[2].variant == Ablation::no_choice_contrast);
  CHECK(t.mean_accuracy(Ablation::full) == doctest::Approx((t.rows[0].test_acc + t.rows[1].test_acc) / 2));

  // Each row equals a standalone run with the same seed and variant.
  DCNetConfig c = tiny_config();
  c.ablation = Ablation::no_choice_contrast;
  TrainConfig tc = tiny_train(1);
  tc.seed = 2;
  const auto net = make_model(c, 2);
  CHECK(train(*net, small_train(), small_test(), tc).final_test_acc() == t.rows[3].test_acc);

  const std::string csv = t.to_csv();
  CHECK(csv.rfind("variant,seed,test_acc,train_loss\nfull,1,", 0) == 0);
  CHECK(csv.find("no_choice_contrast,mean,") != std::string::npos);
}

TEST_CASE("few-shot protocol") {
  const std::vector<double> fractions{0.25, 1.0};
  const std::vector<std::uint64_t> seeds{7};
  const TrainConfig tc = tiny_train(2);
  const FewShotTable t =
      run_few_shot(fractions, tiny_config(), tc, small_train(), small_test(), seeds);
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].train_size == 10);
  CHECK(t.rows[1].train_size == 40);

  TrainConfig plain = tc;
  plain.seed = 7;
  const auto net = make_model(tiny_config(), 7);
  const RunMetrics m = train(*net, small_train(), small_test(), plain);
  CHECK(t.rows[1].test_acc == m.final_test_acc());
  CHECK(t.rows[1].train_loss == m.epochs.back().train_loss);
  CHECK(t.to_csv().rfind("fraction,seed,train_size,test_acc,train_loss\n0.25,7,10,", 0) == 0);

  const std::vector<double> unordered{0.5, 0.25};
  CHECK_THROWS_AS(run_few_shot(unordered, tiny_config(), tc, small_train(), small_test(), seeds),
                  std::invalid_argument);

  std::vector<rpm::Puzzle> leaky = small_test();
  leaky.push_back(small_train()[0]);
  const std::vector<double> full{1.0};
  CHECK_THROWS_AS(run_few_shot(full, tiny_config(), tc, small_train(), leaky, seeds), LeakError);
}
