#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcnet/model.hpp"
#include "dcnet/rpm/types.hpp"

namespace dcnet::trainer {

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  /// Test accuracy is measured after every `eval_every`-th epoch and after the last one.
  std::size_t eval_every = 1;
  /// Puzzles per forward pass during evaluation.
  std::size_t eval_batch_size = 50;

  void validate() const;
};

/// Scores beyond this magnitude abort training with NumericalError.
inline constexpr double kDivergenceLimit = 1e4;

/// One-hot rows [N, 8].
Tensor make_targets(std::span<const int> answers);

/// Model built from a run seed; the same seed always gives the same weights.
std::unique_ptr<model::DCNet> make_model(const model::DCNetConfig& config, std::uint64_t seed);

struct EpochStats {
  double mean_loss = 0.0;        // per puzzle: summed over the 8 choices, averaged over puzzles
  double accuracy = 0.0;         // train-mode predictions
  double first_batch_loss = 0.0; // per puzzle, before the first update
  std::size_t puzzles = 0;       // puzzles that contributed
};

/// One pass over `data` in an order shuffled by mix_seed(config.seed, epoch).
/// `optimizer_step` is the running optimizer step count and is advanced per batch.
/// A trailing batch of a single puzzle is skipped since batchnorm needs two.
EpochStats train_epoch(model::DCNet& net, std::span<const rpm::Puzzle> data,
                       const TrainConfig& config, std::size_t epoch, std::uint64_t& optimizer_step);

/// Eval-mode predicted answer per puzzle.
std::vector<int> predictions(model::DCNet& net, std::span<const rpm::Puzzle> data,
                             std::size_t batch_size = 50);
/// Fraction of puzzles whose prediction equals the stored answer.
double evaluate(model::DCNet& net, std::span<const rpm::Puzzle> data, std::size_t batch_size = 50);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  double seconds = 0.0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  double first_batch_loss = 0.0;

  /// Header `epoch,train_loss,train_acc,test_acc,seconds`; test_acc is empty
  /// for epochs without evaluation.
  std::string to_csv() const;
  /// Last measured test accuracy.
  double final_test_acc() const;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Trains `net` for config.epochs epochs. The optimizer step count continues
/// from the parameters' stored step, so a restored checkpoint resumes.
RunMetrics train(model::DCNet& net, std::span<const rpm::Puzzle> train_data,
                 std::span<const rpm::Puzzle> test_data, const TrainConfig& config,
                 const EpochCallback& on_epoch = {});

// Experiments --------------------------------------------------------------------

struct AblationRow {
  model::Ablation variant = model::Ablation::full;
  std::optional<std::uint64_t> seed;  // empty for the per-variant mean row
  double test_acc = 0.0;
  double train_loss = 0.0;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // variant-major per-seed rows, then one mean row per variant

  /// Columns `variant,seed,test_acc,train_loss`; mean rows carry seed "mean".
  std::string to_csv() const;
  double mean_accuracy(model::Ablation variant) const;
};

/// Trains every variant once per seed with otherwise identical configs.
/// Runs are independent and spread over `threads` workers.
AblationTable run_ablation(std::span<const model::Ablation> variants,
                           const model::DCNetConfig& base, const TrainConfig& train_config,
                           std::span<const rpm::Puzzle> train_data,
                           std::span<const rpm::Puzzle> test_data,
                           std::span<const std::uint64_t> seeds, std::size_t threads = 1);

struct FewShotRow {
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  double test_acc = 0.0;
  double train_loss = 0.0;
};

struct FewShotTable {
  std::vector<FewShotRow> rows;  // fraction-major

  /// Columns `fraction,seed,train_size,test_acc,train_loss`.
  std::string to_csv() const;
  double mean_accuracy(double fraction) const;
};

/// Thrown when a training subset shares puzzle content with the test set.
struct LeakError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// For each fraction (strictly increasing, in (0, 1]) and seed: subsample the
/// training set with that seed, train a fresh model, evaluate on the full test set.
FewShotTable run_few_shot(std::span<const double> fractions, const model::DCNetConfig& model_config,
                          const TrainConfig& train_config, std::span<const rpm::Puzzle> train_data,
                          std::span<const rpm::Puzzle> test_data,
                          std::span<const std::uint64_t> seeds, std::size_t threads = 1);

}  // namespace dcnet::trainer
