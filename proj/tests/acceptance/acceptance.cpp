// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only if all pass.
//
// Usage: acceptance [--only N[,N...]] [--out-dir DIR]

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dcnet/binary_io.hpp"
#include "dcnet/checkpoint.hpp"
#include "dcnet/dataset_io.hpp"
#include "dcnet/gradient_suite.hpp"
#include "dcnet/model.hpp"
#include "dcnet/rpm/generator.hpp"
#include "dcnet/rpm/solver.hpp"
#include "dcnet/trainer.hpp"
#include "naive_ops.hpp"

using namespace dcnet;
using dcnet::testing::max_abs_diff;
using dcnet::testing::random_tensor;
using model::Ablation;
using model::DCNet;
using model::DCNetConfig;
using ops::Mode;

namespace {

// Desk-scale experiment plan.
constexpr std::size_t kDeskImage = 32;
constexpr std::size_t kDeskTrain = 2000;
constexpr std::size_t kDeskTest = 500;
constexpr std::uint64_t kDeskTrainSeed = 100;
constexpr std::uint64_t kDeskTestSeed = 200;
constexpr std::size_t kDeskStem = 8;
constexpr std::size_t kDeskFeature = 16;
constexpr std::size_t kDeskEpochs = 30;
constexpr std::array<std::uint64_t, 3> kDeskSeeds{1, 2, 3};
constexpr double kFewShotFraction = 0.0625;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::size_t worker_count() { return std::max(1u, std::thread::hardware_concurrency()); }

DCNetConfig desk_config(Ablation ablation = Ablation::full) {
  DCNetConfig c;
  c.image_size = kDeskImage;
  c.stem_channels = kDeskStem;
  c.feature_channels = kDeskFeature;
  c.ablation = ablation;
  return c;
}

trainer::TrainConfig desk_train_config() {
  trainer::TrainConfig t;
  t.epochs = kDeskEpochs;
  t.eval_every = kDeskEpochs;
  return t;
}

/// A small model with a random head and non-trivial running statistics.
DCNetConfig probe_config() {
  DCNetConfig c;
  c.image_size = 32;
  c.stem_channels = 8;
  c.feature_channels = 16;
  c.hidden = 32;
  c.zero_head = false;
  return c;
}

void warm_up(DCNet& net, std::span<const rpm::Puzzle> puzzles) {
  Rng rng(0);
  net.forward(model::panels_tensor(puzzles), Mode::train, rng);
}

// 1 -----------------------------------------------------------------------------------
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto entries = run_gradient_suite(0);
  const double elapsed = seconds_since(t0);
  bool pass = elapsed < 120.0;
  double worst = 0.0;
  std::string failed;
  for (const GradSuiteEntry& e : entries) {
    pass = pass && e.passed();
    worst = std::max(worst, e.report.max_relative_error);
    if (!e.passed()) failed += " " + e.op;
  }
  return {pass, std::to_string(entries.size()) + " checks, worst rel err " + sci(worst) +
                    (failed.empty() ? "" : ", failed:" + failed) + ", " + fixed(elapsed, 1) + " s"};
}

// 2 -----------------------------------------------------------------------------------
Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  constexpr int kCases = 100;
  double conv = 0, pool = 0, bn_train = 0, bn_eval = 0, lin = 0;
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); };
  for (int i = 0; i < kCases; ++i) {
    {
      const std::size_t n = dim(1, 4), c = dim(1, 4), h = dim(3, 8), w = dim(3, 8);
      const std::size_t k = dim(1, 3), stride = dim(1, 2), pad = dim(0, k / 2 + 1);
      const Tensor x = random_tensor({n, c, h, w}, rng);
      const Tensor wt = random_tensor({dim(1, 4), c, k, k}, rng);
      const Tensor b = i % 2 ? random_tensor({wt.dim(0)}, rng) : Tensor();
      conv = std::max(conv, max_abs_diff(ops::conv2d(x, wt, b, stride, pad),
                                         dcnet::testing::naive_conv2d(x, wt, b, stride, pad)));
    }
    {
      const std::size_t k = dim(2, 3), stride = dim(1, 2), pad = dim(0, k / 2);
      const Tensor x = random_tensor({dim(1, 4), dim(1, 4), dim(k, 8), dim(k, 8)}, rng);
      pool = std::max(pool, max_abs_diff(ops::maxpool2d(x, k, stride, pad),
                                         dcnet::testing::naive_maxpool2d(x, k, stride, pad)));
    }
    {
      const std::size_t c = dim(1, 4);
      const Tensor x = random_tensor({dim(2, 4), c, dim(1, 8), dim(1, 8)}, rng, -2.0, 3.0);
      const Tensor gamma = random_tensor({c}, rng), beta = random_tensor({c}, rng);
      auto stats = ops::RunningStats::identity(c);
      bn_train = std::max(bn_train, max_abs_diff(ops::batchnorm2d(x, gamma, beta, stats, Mode::train),
                                                 dcnet::testing::naive_batchnorm_train(
                                                     x, gamma, beta, ops::kBatchNormEps)));
      const Tensor mean = random_tensor({c}, rng), var = random_tensor({c}, rng, 0.1, 2.0);
      ops::RunningStats fixed_stats{mean.clone(), var.clone(), true};
      bn_eval = std::max(bn_eval, max_abs_diff(ops::batchnorm2d(x, gamma, beta, fixed_stats, Mode::eval),
                                               dcnet::testing::naive_batchnorm_eval(
                                                   x, gamma, beta, mean, var, ops::kBatchNormEps)));
    }
    {
      const std::size_t n = dim(1, 8), d = dim(1, 32), k = dim(1, 16);
      const Tensor x = random_tensor({n, d}, rng), w = random_tensor({d, k}, rng);
      const Tensor b = i % 2 ? random_tensor({k}, rng) : Tensor();
      lin = std::max(lin, max_abs_diff(ops::linear(x, w, b), dcnet::testing::naive_linear(x, w, b)));
    }
  }
  const double elapsed = seconds_since(t0);
  const double worst = std::max({conv, pool, bn_train, bn_eval, lin});
  return {worst <= 1e-10 && elapsed < 60.0,
          std::to_string(kCases) + " cases each; max abs diff conv " + sci(conv) + ", pool " +
              sci(pool) + ", bn train " + sci(bn_train) + ", bn eval " + sci(bn_eval) + ", linear " +
              sci(lin) + ", " + fixed(elapsed, 1) + " s"};
}

// 3 -----------------------------------------------------------------------------------
Outcome shape_contract() {
  DCNetConfig c;  // defaults: 96x96, 64/128 channels
  DCNet net(c, 1);
  const auto puzzles = rpm::generate_dataset(1, rpm::Config::center, 96, 5, 1);
  const model::TripleStack t = model::form_triples(model::panels_tensor(puzzles));
  const Tensor f = net.encode(ops::narrow(t.rows, 0, 0, 2), Mode::eval);
  const Shape& fc1 = net.parameter("head.fc1.weight").tensor.shape();
  Rng rng(0);
  const Tensor scores = net.forward(model::panels_tensor(puzzles), Mode::eval, rng);
  const bool pass = f.shape() == Shape{2, 128, 24, 24} && c.mlp_input_dim() == 512 && fc1[0] == 512 &&
                    scores.shape() == Shape{1, 8};
  return {pass, "encoder output " + to_string(f.shape()) + ", MLP input " + std::to_string(fc1[0]) +
                    ", scores " + to_string(scores.shape())};
}

// 4 -----------------------------------------------------------------------------------
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

Outcome structural_invariants() {
  constexpr std::size_t kPuzzles = 100;
  const auto puzzles = rpm::generate_dataset(kPuzzles, rpm::Config::center, 32, 77, 1);
  DCNet net(probe_config(), 3);
  warm_up(net, std::span(puzzles).first(16));
  Rng rng(9);
  Rng unused(0);

  double perm_err = 0.0, transpose_err = 0.0, centering_err = 0.0;
  bool centroid_exact = true;
  DCNetConfig identity = probe_config();
  identity.identity_phi = true;
  DCNet identity_net(identity, 3);
  warm_up(identity_net, std::span(puzzles).first(16));

  for (std::size_t i = 0; i < kPuzzles; ++i) {
    const Tensor panels = model::panels_tensor(std::span(puzzles).subspan(i, 1));
    const Tensor scores = net.forward(panels, Mode::eval, unused);

    std::array<std::size_t, 8> perm{0, 1, 2, 3, 4, 5, 6, 7};
    shuffle(perm.begin(), perm.end(), rng);
    Tensor permuted = panels.clone();
    const std::size_t px = 32 * 32;
    for (std::size_t k = 0; k < 8; ++k)
      std::copy_n(panels.data().data() + (8 + perm[k]) * px, px, permuted.data().data() + (8 + k) * px);
    const Tensor permuted_scores = net.forward(permuted, Mode::eval, unused);
    for (std::size_t k = 0; k < 8; ++k)
      perm_err = std::max(perm_err, std::abs(permuted_scores.data()[k] - scores.data()[perm[k]]));

    transpose_err = std::max(
        transpose_err, max_abs_diff(net.forward(transpose_context(panels), Mode::eval, unused), scores));

    // Candidates placed at the context centroid give exactly zero rule contrast.
    const model::TripleStack t = model::form_triples(panels);
    Tensor f = net.encode(t.rows, Mode::eval).clone();
    const std::size_t block = f.numel() / 10;
    auto d = f.data();
    for (std::size_t j = 2; j < 10; ++j)
      for (std::size_t e = 0; e < block; ++e) d[j * block + e] = 0.5 * (d[e] + d[block + e]);
    const Tensor g = net.rule_contrast(ops::reshape(f, {1, 10, f.dim(1), f.dim(2), f.dim(3)}));
    for (double v : g.data()) centroid_exact = centroid_exact && v == 0.0;

    // With phi = identity the candidate features are centered on their mean.
    const model::TripleStack ti = model::form_triples(panels);
    const Tensor fi = identity_net.encode(ti.rows, Mode::eval);
    const Tensor gi = identity_net.rule_contrast(ops::reshape(fi, {1, 10, fi.dim(1), fi.dim(2), fi.dim(3)}));
    const Tensor h = identity_net.choice_contrast(gi, Mode::eval);
    const Tensor sum = ops::mean_over(h, 1);
    for (double v : sum.data()) centering_err = std::max(centering_err, std::abs(v));
  }
  const bool pass = perm_err <= 1e-12 && transpose_err <= 1e-9 && centroid_exact && centering_err <= 1e-12;
  return {pass, std::to_string(kPuzzles) + " puzzles; permutation " + sci(perm_err) +
                    ", transposition " + sci(transpose_err) + ", centroid " +
                    (centroid_exact ? "exact zero" : "NOT zero") + ", identity-phi mean " +
                    sci(centering_err)};
}

// 5 -----------------------------------------------------------------------------------
Outcome dataset_soundness() {
  bool pass = true;
  std::ostringstream detail;
  for (rpm::Config config : {rpm::Config::center, rpm::Config::grid2x2}) {
    const auto puzzles = rpm::generate_dataset(1000, config, 32, 7);
    std::size_t agree = 0, unique = 0;
    std::array<std::size_t, 8> counts{};
    for (const rpm::Puzzle& p : puzzles) {
      ++counts[static_cast<std::size_t>(p.answer)];
      try {
        agree += rpm::solve_by_rules(p) == p.answer;
      } catch (const rpm::AmbiguousPuzzle&) {
      }
      const auto& prov = *p.provenance;
      std::array<rpm::AttributeVector, 8> context;
      std::copy_n(prov.matrix.begin(), 8, context.begin());
      unique += rpm::satisfying_choices(context, prov.choices) == std::vector<int>{p.answer};
    }
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    const bool ok = agree == 1000 && unique == 1000 && *lo >= 90 && *hi <= 160;
    pass = pass && ok;
    detail << rpm::to_string(config) << ": agreement " << agree << "/1000, distractors rejected in "
           << unique << "/1000, answer counts " << *lo << ".." << *hi << "; ";
  }
  std::string s = detail.str();
  return {pass, s.substr(0, s.size() - 2)};
}

// 6 -----------------------------------------------------------------------------------
Outcome loss_anchor(const std::vector<rpm::Puzzle>& train) {
  const auto net = trainer::make_model(desk_config(), kDeskSeeds[0]);
  trainer::TrainConfig t = desk_train_config();
  t.seed = kDeskSeeds[0];
  std::uint64_t step = 0;
  const auto first = std::span(train).first(2 * t.batch_size);
  const trainer::EpochStats s = trainer::train_epoch(*net, first, t, 0, step);
  const double expected = 8.0 * std::numbers::ln2;
  const double err = std::abs(s.first_batch_loss - expected);
  return {err <= 1e-6, "first batch loss " + fixed(s.first_batch_loss, 10) + " vs 8 ln 2 = " +
                           fixed(expected, 10) + " (diff " + sci(err) + ")"};
}

// 7, 8 --------------------------------------------------------------------------------
struct DeskResults {
  trainer::AblationTable ablation;
  trainer::FewShotTable few_shot;
  double seconds = 0.0;
};

DeskResults run_desk(const std::vector<rpm::Puzzle>& train, const std::vector<rpm::Puzzle>& test,
                     const std::filesystem::path& out_dir) {
  const auto t0 = Clock::now();
  DeskResults r;
  const std::vector<Ablation> variants{Ablation::full, Ablation::no_choice_contrast};
  r.ablation = trainer::run_ablation(variants, desk_config(), desk_train_config(), train, test,
                                     kDeskSeeds, worker_count());
  const std::vector<double> fractions{kFewShotFraction};
  r.few_shot = trainer::run_few_shot(fractions, desk_config(), desk_train_config(), train, test,
                                     kDeskSeeds, worker_count());
  // Fraction 1.0 is the full training set, identical to the full-variant runs above.
  for (const trainer::AblationRow& row : r.ablation.rows) {
    if (row.variant == Ablation::full && row.seed)
      r.few_shot.rows.push_back({1.0, *row.seed, train.size(), row.test_acc, row.train_loss});
  }
  r.seconds = seconds_since(t0);
  std::ofstream(out_dir / "desk_ablation.csv") << r.ablation.to_csv();
  std::ofstream(out_dir / "desk_few_shot.csv") << r.few_shot.to_csv();
  return r;
}

Outcome desk_learning(const DeskResults& r) {
  const double full = r.ablation.mean_accuracy(Ablation::full);
  const double no_cc = r.ablation.mean_accuracy(Ablation::no_choice_contrast);
  const bool pass = full >= 0.70 && full >= 5 * 0.125 && full - no_cc >= 0.10;
  return {pass, "mean test acc over " + std::to_string(kDeskSeeds.size()) + " seeds: full " +
                    fixed(full) + ", no_choice_contrast " + fixed(no_cc) + " (gap " +
                    fixed(full - no_cc) + "), " + std::to_string(kDeskEpochs) + " epochs, " +
                    fixed(r.seconds / 60.0, 1) + " min total"};
}

Outcome few_shot_direction(const DeskResults& r) {
  const double small = r.few_shot.mean_accuracy(kFewShotFraction);
  const double full = r.few_shot.mean_accuracy(1.0);
  return {full >= small, "mean test acc at fraction " + fixed(kFewShotFraction, 4) + ": " +
                             fixed(small) + ", at 1.0: " + fixed(full)};
}

// 9 -----------------------------------------------------------------------------------
Outcome format_fidelity(const std::filesystem::path& out_dir) {
  bool pass = true;
  std::ostringstream detail;

  const auto puzzles = rpm::generate_dataset(20, rpm::Config::grid2x2, 32, 9, 1);
  const auto bytes = data::encode_dataset(puzzles);
  const std::string ds_path = (out_dir / "fidelity.rpmd").string();
  data::save_dataset(ds_path, puzzles);
  const data::Dataset loaded = data::load_dataset(ds_path);
  const bool ds_ok = binary::read_file(ds_path) == bytes && loaded.puzzles == puzzles &&
                     data::encode_dataset(loaded.puzzles) == bytes;
  pass = pass && ds_ok;
  detail << "dataset round trip " << (ds_ok ? "byte-exact" : "MISMATCH");

  DCNet net(probe_config(), 4);
  warm_up(net, puzzles);
  const std::string ck_path = (out_dir / "fidelity.ckpt").string();
  save_checkpoint(ck_path, net.parameters());
  DCNet restored(probe_config(), 99);
  load_checkpoint(ck_path, restored.parameters());
  const bool ck_ok = encode_checkpoint(restored.parameters()) == binary::read_file(ck_path);
  pass = pass && ck_ok;
  detail << ", checkpoint round trip " << (ck_ok ? "byte-exact" : "MISMATCH");

  // Three synthetic 160x160 records in the external layout, resized to 96x96.
  const std::filesystem::path dir = out_dir / "import_fixture";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::array<int, 3> targets{2, 7, 0};
  Rng rng(31);
  for (std::size_t r = 0; r < 3; ++r) {
    std::vector<std::uint8_t> stack(16 * 160 * 160);
    for (auto& v : stack) v = static_cast<std::uint8_t>(uniform_index(rng, 256));
    const auto rec = data::encode_external_record(stack, 16, 160, 160, targets[r]);
    binary::write_file((dir / ("puzzle_" + std::to_string(r) + ".bin")).string(), rec);
  }
  const data::ImportReport report = data::import_external(dir, 96);
  bool import_ok = report.puzzles.size() == 3 && report.rejected.empty();
  for (std::size_t r = 0; import_ok && r < 3; ++r) {
    const rpm::Puzzle& p = report.puzzles[r];
    import_ok = p.answer == targets[r] && p.image_size == 96;
    for (const rpm::Image& im : p.context) import_ok = import_ok && im.size == 96 && im.pixels.size() == 96 * 96;
    for (const rpm::Image& im : p.choices) import_ok = import_ok && im.size == 96 && im.pixels.size() == 96 * 96;
  }
  pass = pass && import_ok;
  detail << ", import fixture " << report.puzzles.size() << "/3 records at 96x96 with answers "
         << (import_ok ? "2,7,0" : "WRONG");
  return {pass, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  std::filesystem::path out_dir = std::filesystem::current_path();
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (std::strcmp(argv[i], "--out-dir") == 0 && i + 1 < argc) {
      out_dir = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only N[,N...]] [--out-dir DIR]\n";
      return 2;
    }
  }
  std::filesystem::create_directories(out_dir);
  auto wanted = [&](int n) { return only.empty() || only.contains(n); };

  bool all = true;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& run) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << n << "] " << name << ": " << o.detail << std::endl;
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "oracle equivalence", oracle_equivalence);
  report(3, "architecture shape contract", shape_contract);
  report(4, "structural invariants", structural_invariants);
  report(5, "dataset soundness", dataset_soundness);

  std::vector<rpm::Puzzle> train, test;
  if (wanted(6) || wanted(7) || wanted(8)) {
    train = rpm::generate_dataset(kDeskTrain, rpm::Config::center, kDeskImage, kDeskTrainSeed);
    test = rpm::generate_dataset(kDeskTest, rpm::Config::center, kDeskImage, kDeskTestSeed);
  }
  report(6, "analytic loss anchor", [&] { return loss_anchor(train); });
  if (wanted(7) || wanted(8)) {
    std::optional<DeskResults> desk;
    std::string failure;
    try {
      desk = run_desk(train, test, out_dir);
    } catch (const std::exception& e) {
      failure = std::string("exception: ") + e.what();
    }
    report(7, "desk-scale learning", [&] { return desk ? desk_learning(*desk) : Outcome{false, failure}; });
    report(8, "few-shot direction", [&] { return desk ? few_shot_direction(*desk) : Outcome{false, failure}; });
  }
  report(9, "format fidelity", [&] { return format_fidelity(out_dir); });

  std::cout << (all ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED") << std::endl;
  return all ? 0 : 1;
}
