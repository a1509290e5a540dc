#include "dcnet/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "dcnet/dataset_io.hpp"
#include "dcnet/random.hpp"

namespace dcnet::trainer {

using model::Ablation;
using model::DCNet;
using model::DCNetConfig;
using ops::Mode;

namespace {

// Stream tags keep the seeds derived from one run seed apart.
constexpr std::uint64_t kInitStream = 0x1217;

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void check_scores(const Tensor& scores, std::size_t epoch, std::size_t batch) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  double sum = 0.0;
  bool finite = true;
  for (double s : scores.data()) {
    finite = finite && std::isfinite(s);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
    sum += s;
  }
  if (finite && std::max(std::abs(lo), std::abs(hi)) <= kDivergenceLimit) return;
  std::ostringstream os;
  os << "training diverged at epoch " << epoch << ", batch " << batch << ": scores min " << lo
     << ", max " << hi << ", mean " << sum / static_cast<double>(scores.numel());
  throw NumericalError(os.str());
}

std::vector<rpm::Puzzle> gather(std::span<const rpm::Puzzle> data,
                                std::span<const std::size_t> indices) {
  std::vector<rpm::Puzzle> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(data[i]);
  return out;
}

std::vector<int> answers_of(std::span<const rpm::Puzzle> puzzles) {
  std::vector<int> out;
  out.reserve(puzzles.size());
  for (const rpm::Puzzle& p : puzzles) out.push_back(p.answer);
  return out;
}

/// Runs job(i) for i in [0, n) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (std::thread& w : workers) w.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw model::ConfigError("batch_size must be at least 2");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw model::ConfigError("lr must be positive");
  if (eval_every < 1) throw model::ConfigError("eval_every must be at least 1");
  if (eval_batch_size < 1) throw model::ConfigError("eval_batch_size must be at least 1");
}

Tensor make_targets(std::span<const int> answers) {
  Tensor t({answers.size(), 8});
  auto d = t.data();
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const int a = answers[i];
    if (a < 0 || a > 7) {
      throw std::out_of_range("make_targets: answer " + std::to_string(a) + " at row " +
                              std::to_string(i) + " is outside 0..7");
    }
    d[i * 8 + static_cast<std::size_t>(a)] = 1.0;
  }
  return t;
}

std::unique_ptr<DCNet> make_model(const DCNetConfig& config, std::uint64_t seed) {
  return std::make_unique<DCNet>(config, mix_seed(seed, kInitStream));
}

EpochStats train_epoch(DCNet& net, std::span<const rpm::Puzzle> data, const TrainConfig& config,
                       std::size_t epoch, std::uint64_t& optimizer_step) {
  config.validate();
  if (data.size() < 2) throw std::invalid_argument("train_epoch: need at least 2 puzzles");

  Rng rng(mix_seed(config.seed, epoch));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order.begin(), order.end(), rng);

  const AdamConfig adam{.lr = config.lr};
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::size_t batch_index = 0;
  for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size, ++batch_index) {
    const std::size_t n = std::min(config.batch_size, order.size() - start);
    const std::vector<rpm::Puzzle> batch =
        gather(data, std::span(order).subspan(start, n));
    const std::vector<int> answers = answers_of(batch);

    Tape tape;
    const Tensor scores = net.forward(model::panels_tensor(batch), Mode::train, rng);
    check_scores(scores, epoch, batch_index);
    const Tensor total = ops::bce_with_logits(scores, make_targets(answers));
    const double batch_loss = total.item();
    if (!std::isfinite(batch_loss)) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + ": non-finite loss");
    }
    tape.backward(ops::scale(total, 1.0 / static_cast<double>(n)));
    adam_step(net.parameters(), adam, ++optimizer_step);

    if (batch_index == 0) stats.first_batch_loss = batch_loss / static_cast<double>(n);
    loss_sum += batch_loss;
    const std::vector<int> predicted = model::predict(scores);
    for (std::size_t i = 0; i < n; ++i) correct += predicted[i] == answers[i];
    stats.puzzles += n;
  }
  stats.mean_loss = loss_sum / static_cast<double>(stats.puzzles);
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(stats.puzzles);
  return stats;
}

std::vector<int> predictions(DCNet& net, std::span<const rpm::Puzzle> data,
                             std::size_t batch_size) {
  if (batch_size < 1) throw std::invalid_argument("predictions: batch_size must be positive");
  std::vector<int> out;
  out.reserve(data.size());
  Rng unused(0);
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const auto batch = data.subspan(start, std::min(batch_size, data.size() - start));
    const Tensor scores = net.forward(model::panels_tensor(batch), Mode::eval, unused);
    for (int p : model::predict(scores)) out.push_back(p);
  }
  return out;
}

double evaluate(DCNet& net, std::span<const rpm::Puzzle> data, std::size_t batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const std::vector<int> predicted = predictions(net, data, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += predicted[i] == data[i].answer;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::string RunMetrics::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,train_acc,test_acc,seconds\n";
  for (const EpochMetrics& m : epochs) {
    os << m.epoch << ',' << format_double(m.train_loss) << ',' << format_double(m.train_acc) << ','
       << (m.test_acc ? format_double(*m.test_acc) : "") << ',' << std::fixed
       << std::setprecision(3) << m.seconds << std::defaultfloat << '\n';
  }
  return os.str();
}

double RunMetrics::final_test_acc() const {
  for (auto it = epochs.rbegin(); it != epochs.rend(); ++it)
    if (it->test_acc) return *it->test_acc;
  throw std::logic_error("no epoch was evaluated");
}

RunMetrics train(DCNet& net, std::span<const rpm::Puzzle> train_data,
                 std::span<const rpm::Puzzle> test_data, const TrainConfig& config,
                 const EpochCallback& on_epoch) {
  config.validate();
  if (test_data.empty()) throw std::invalid_argument("train: empty test set");
  std::uint64_t step = 0;
  for (const Parameter& p : net.parameters()) step = std::max(step, p.step);

  RunMetrics metrics;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochStats stats = train_epoch(net, train_data, config, epoch, step);
    if (epoch == 0) metrics.first_batch_loss = stats.first_batch_loss;

    EpochMetrics m{.epoch = epoch, .train_loss = stats.mean_loss, .train_acc = stats.accuracy,
                   .test_acc = std::nullopt};
    if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs)
      m.test_acc = evaluate(net, test_data, config.eval_batch_size);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.epochs.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return metrics;
}

// Experiments ------------------------------------------------------------------------

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os << "variant,seed,test_acc,train_loss\n";
  for (const AblationRow& r : rows) {
    os << model::to_string(r.variant) << ',' << (r.seed ? std::to_string(*r.seed) : "mean") << ','
       << format_double(r.test_acc) << ',' << format_double(r.train_loss) << '\n';
  }
  return os.str();
}

double AblationTable::mean_accuracy(Ablation variant) const {
  for (const AblationRow& r : rows)
    if (r.variant == variant && !r.seed) return r.test_acc;
  throw std::out_of_range("no mean row for variant " + model::to_string(variant));
}

AblationTable run_ablation(std::span<const Ablation> variants, const DCNetConfig& base,
                           const TrainConfig& train_config, std::span<const rpm::Puzzle> train_data,
                           std::span<const rpm::Puzzle> test_data,
                           std::span<const std::uint64_t> seeds, std::size_t threads) {
  if (variants.empty() || seeds.empty())
    throw std::invalid_argument("run_ablation: need at least one variant and one seed");
  const std::size_t runs = variants.size() * seeds.size();
  std::vector<AblationRow> results(runs);
  parallel_for(runs, threads, [&](std::size_t i) {
    DCNetConfig config = base;
    config.ablation = variants[i / seeds.size()];
    TrainConfig tc = train_config;
    tc.seed = seeds[i % seeds.size()];
    const auto net = make_model(config, tc.seed);
    const RunMetrics m = train(*net, train_data, test_data, tc);
    results[i] = AblationRow{config.ablation, tc.seed, m.final_test_acc(), m.epochs.back().train_loss};
  });

  AblationTable table{results};
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow mean{.variant = variants[v], .seed = std::nullopt};
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      mean.test_acc += results[v * seeds.size() + s].test_acc;
      mean.train_loss += results[v * seeds.size() + s].train_loss;
    }
    mean.test_acc /= static_cast<double>(seeds.size());
    mean.train_loss /= static_cast<double>(seeds.size());
    table.rows.push_back(mean);
  }
  return table;
}

std::string FewShotTable::to_csv() const {
  std::ostringstream os;
  os << "fraction,seed,train_size,test_acc,train_loss\n";
  for (const FewShotRow& r : rows) {
    os << format_double(r.fraction) << ',' << r.seed << ',' << r.train_size << ','
       << format_double(r.test_acc) << ',' << format_double(r.train_loss) << '\n';
  }
  return os.str();
}

double FewShotTable::mean_accuracy(double fraction) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const FewShotRow& r : rows) {
    if (r.fraction == fraction) {
      sum += r.test_acc;
      ++n;
    }
  }
  if (n == 0) throw std::out_of_range("no rows for fraction " + format_double(fraction));
  return sum / static_cast<double>(n);
}

FewShotTable run_few_shot(std::span<const double> fractions, const DCNetConfig& model_config,
                          const TrainConfig& train_config, std::span<const rpm::Puzzle> train_data,
                          std::span<const rpm::Puzzle> test_data,
                          std::span<const std::uint64_t> seeds, std::size_t threads) {
  if (fractions.empty() || seeds.empty())
    throw std::invalid_argument("run_few_shot: need at least one fraction and one seed");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] > 0.0 && fractions[i] <= 1.0))
      throw std::invalid_argument("run_few_shot: fractions must lie in (0, 1]");
    if (i > 0 && !(fractions[i] > fractions[i - 1]))
      throw std::invalid_argument("run_few_shot: fractions must be strictly increasing");
  }

  std::unordered_set<std::uint64_t> test_hashes;
  for (const rpm::Puzzle& p : test_data) test_hashes.insert(data::content_hash(p));

  const std::size_t runs = fractions.size() * seeds.size();
  std::vector<FewShotRow> rows(runs);
  parallel_for(runs, threads, [&](std::size_t i) {
    const double fraction = fractions[i / seeds.size()];
    const std::uint64_t seed = seeds[i % seeds.size()];
    const std::vector<std::size_t> picked = data::subsample_indices(train_data.size(), fraction, seed);
    const std::vector<rpm::Puzzle> subset = gather(train_data, picked);
    for (std::size_t k = 0; k < subset.size(); ++k) {
      if (test_hashes.contains(data::content_hash(subset[k]))) {
        throw LeakError("training puzzle " + std::to_string(picked[k]) +
                        " also appears in the test set");
      }
    }
    TrainConfig tc = train_config;
    tc.seed = seed;
    const auto net = make_model(model_config, seed);
    const RunMetrics m = train(*net, subset, test_data, tc);
    rows[i] = FewShotRow{fraction, seed, subset.size(), m.final_test_acc(), m.epochs.back().train_loss};
  });
  return FewShotTable{rows};
}

}  // namespace dcnet::trainer
