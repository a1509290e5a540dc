#include "dcnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "dcnet/binary_io.hpp"
#include "dcnet/checkpoint.hpp"
#include "dcnet/dataset_io.hpp"
#include "dcnet/gradient_suite.hpp"
#include "dcnet/rpm/generator.hpp"
#include "dcnet/rpm/solver.hpp"
#include "dcnet/trainer.hpp"

namespace dcnet::cli {

namespace {

using model::Ablation;
using model::DCNetConfig;

/// Bad flags, config entries, or input files.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

/// Flat `key=value` lines; blank lines and lines starting with '#' are skipped.
std::vector<std::pair<std::string, std::string>> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw UsageError(path + ":" + std::to_string(number) + ": expected key=value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s, const std::string& flag) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw UsageError("--" + flag + ": empty list entry in '" + s + "'");
    out.push_back(item);
  }
  if (out.empty()) throw UsageError("--" + flag + ": empty list");
  return out;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  for (const std::string& item : split_list(s, "fractions")) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw UsageError("--fractions: not a number: " + item);
    if (!(v > 0.0 && v <= 1.0)) throw UsageError("--fractions: " + item + " is outside (0, 1]");
    if (!out.empty() && !(v > out.back()))
      throw UsageError("--fractions must be strictly increasing");
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const std::string& item : split_list(s, "seeds")) {
    if (item.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("--seeds: not an unsigned integer: " + item);
    out.push_back(std::stoull(item));
  }
  return out;
}

std::vector<Ablation> parse_variants(const std::string& s) {
  std::vector<Ablation> out;
  for (const std::string& item : split_list(s, "variants")) {
    const auto a = model::parse_ablation(item);
    if (!a) throw UsageError("--variants: unknown variant " + item);
    out.push_back(*a);
  }
  return out;
}

Ablation parse_variant(const std::string& s) {
  const auto a = model::parse_ablation(s);
  if (!a) throw UsageError("--ablation: unknown variant " + s);
  return *a;
}

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

/// The run seed: the flag value, or a fresh one that is printed for reproduction.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::ostream& out) {
  if (flag) return *flag;
  const std::uint64_t seed = entropy_seed();
  out << "seed: " << seed << " (drawn from entropy; pass --seed " << seed << " to repeat)\n";
  return seed;
}

data::Dataset load_input(const std::string& path) {
  try {
    return data::load_dataset(path);
  } catch (const binary::FormatError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw UsageError("cannot write " + path);
}

// Model flags shared by the training commands ---------------------------------------

struct ModelFlags {
  std::size_t stem_channels = 64;
  std::size_t feature_channels = 128;
  std::size_t hidden = 256;
  double dropout = 0.5;

  void add_to(CLI::App& app) {
    app.add_option("--stem-channels", stem_channels, "Channels of the first conv layer")
        ->capture_default_str();
    app.add_option("--feature-channels", feature_channels, "Channels of the triple embedding")
        ->capture_default_str();
    app.add_option("--hidden", hidden, "Hidden width of the scoring MLP")->capture_default_str();
    app.add_option("--dropout", dropout, "Dropout probability in the scoring MLP")
        ->capture_default_str()
        ->check(CLI::Range(0.0, 0.999));
  }

  DCNetConfig config(std::size_t image_size, Ablation ablation) const {
    DCNetConfig c;
    c.image_size = image_size;
    c.stem_channels = stem_channels;
    c.feature_channels = feature_channels;
    c.hidden = hidden;
    c.dropout_p = dropout;
    c.ablation = ablation;
    try {
      c.validate();
    } catch (const model::ConfigError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct TrainFlags {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t eval_every = 1;

  void add_to(CLI::App& app) {
    app.add_option("--epochs", epochs, "Training epochs")->capture_default_str();
    app.add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--lr", lr, "Adam learning rate")->capture_default_str();
    app.add_option("--eval-every", eval_every, "Evaluate the test set every N epochs")
        ->capture_default_str();
  }

  trainer::TrainConfig config(std::uint64_t seed) const {
    trainer::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = batch_size;
    t.lr = lr;
    t.eval_every = eval_every;
    t.seed = seed;
    try {
      t.validate();
    } catch (const model::ConfigError& e) {
      throw UsageError(e.what());
    }
    return t;
  }
};

// Checkpoint sidecar: the model config needed to rebuild the network.

std::string sidecar_path(const std::string& ckpt) { return ckpt + ".cfg"; }

void write_sidecar(const std::string& ckpt, const DCNetConfig& c) {
  std::ostringstream os;
  os << "image-size=" << c.image_size << "\nstem-channels=" << c.stem_channels
     << "\nfeature-channels=" << c.feature_channels << "\nhidden=" << c.hidden
     << "\ndropout=" << format_double(c.dropout_p) << "\nablation=" << model::to_string(c.ablation)
     << '\n';
  write_text(sidecar_path(ckpt), os.str());
}

DCNetConfig read_sidecar(const std::string& ckpt) {
  const std::string path = sidecar_path(ckpt);
  if (!std::filesystem::exists(path)) throw UsageError("missing model config " + path);
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : read_key_values(path)) kv[k] = v;
  auto need = [&](const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw UsageError(path + ": missing key " + key);
    return it->second;
  };
  DCNetConfig c;
  try {
    c.image_size = std::stoul(need("image-size"));
    c.stem_channels = std::stoul(need("stem-channels"));
    c.feature_channels = std::stoul(need("feature-channels"));
    c.hidden = std::stoul(need("hidden"));
    c.dropout_p = std::stod(need("dropout"));
  } catch (const std::logic_error&) {
    throw UsageError(path + ": malformed value");
  }
  c.ablation = parse_variant(need("ablation"));
  if (kv.size() != 6) throw UsageError(path + ": unexpected keys");
  return c;
}

std::string histogram_line(const std::vector<rpm::Puzzle>& puzzles) {
  std::array<std::size_t, 8> counts{};
  for (const rpm::Puzzle& p : puzzles) ++counts[static_cast<std::size_t>(p.answer)];
  std::ostringstream os;
  for (std::size_t i = 0; i < 8; ++i) os << (i ? " " : "") << i << ':' << counts[i];
  return os.str();
}

// Commands ---------------------------------------------------------------------------

struct GenFlags {
  std::size_t n = 0;
  std::string config = "center";
  std::size_t size = 32;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t threads = 0;
};

int cmd_gen(const GenFlags& f, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = resolve_seed(f.seed, out);
  const rpm::Config config = *rpm::parse_config(f.config);
  const auto puzzles = rpm::generate_dataset(f.n, config, f.size, seed, f.threads);

  std::size_t validated = 0;
  for (const rpm::Puzzle& p : puzzles) {
    try {
      validated += rpm::solve_by_rules(p) == p.answer;
    } catch (const rpm::AmbiguousPuzzle&) {
    }
  }
  data::save_dataset(f.out, puzzles);
  out << "generated " << puzzles.size() << " puzzles (config " << f.config << ", size " << f.size
      << ", seed " << seed << ") -> " << f.out << '\n'
      << "answer histogram: " << histogram_line(puzzles) << '\n'
      << "oracle validation: " << validated << '/' << puzzles.size() << '\n';
  if (validated != puzzles.size()) {
    err << "error: " << puzzles.size() - validated << " puzzles failed oracle validation\n";
    return kExitFailure;
  }
  return kExitSuccess;
}

int cmd_import(const std::string& dir, const std::string& out_path, std::size_t size,
               std::ostream& out) {
  const data::ImportReport report = data::import_external(dir, size);
  for (const data::ImportIssue& issue : report.rejected)
    out << "rejected " << issue.file << ": " << issue.message << '\n';
  if (report.puzzles.empty()) throw UsageError("no importable puzzles in " + dir);
  data::save_dataset(out_path, report.puzzles);
  out << "imported " << report.puzzles.size() << " of " << report.files_seen() << " files ("
      << size << "x" << size << ") -> " << out_path << '\n'
      << "answer histogram: " << histogram_line(report.puzzles) << '\n';
  return kExitSuccess;
}

struct TrainCmdFlags {
  std::string data, test, ablation = "full", out_ckpt, metrics;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainCmdFlags& f, const TrainFlags& tf, const ModelFlags& mf,
              std::ostream& out) {
  const std::uint64_t seed = resolve_seed(f.seed, out);
  const data::Dataset train_set = load_input(f.data);
  const data::Dataset test_set = load_input(f.test);
  if (train_set.image_size != test_set.image_size)
    throw UsageError("image size differs between " + f.data + " and " + f.test);
  const DCNetConfig mc = mf.config(train_set.image_size, parse_variant(f.ablation));
  const trainer::TrainConfig tc = tf.config(seed);

  out << "train: ablation=" << model::to_string(mc.ablation) << " seed=" << seed
      << " epochs=" << tc.epochs << " batch-size=" << tc.batch_size << " lr=" << tc.lr
      << " image-size=" << mc.image_size << " channels=" << mc.stem_channels << '/'
      << mc.feature_channels << " hidden=" << mc.hidden << " dropout=" << mc.dropout_p
      << " train=" << train_set.puzzles.size() << " test=" << test_set.puzzles.size() << '\n';

  const auto net = trainer::make_model(mc, seed);
  const trainer::RunMetrics metrics =
      trainer::train(*net, train_set.puzzles, test_set.puzzles, tc, [&](const trainer::EpochMetrics& m) {
        out << "epoch " << m.epoch << ": loss " << format_double(m.train_loss) << " train_acc "
            << m.train_acc;
        if (m.test_acc) out << " test_acc " << format_double(*m.test_acc);
        out << " (" << std::fixed << std::setprecision(1) << m.seconds << std::defaultfloat
            << std::setprecision(6) << " s)" << std::endl;
      });
  if (!f.metrics.empty()) write_text(f.metrics, metrics.to_csv());
  if (!f.out_ckpt.empty()) {
    save_checkpoint(f.out_ckpt, net->parameters());
    write_sidecar(f.out_ckpt, mc);
  }
  out << "final test accuracy: " << format_double(metrics.final_test_acc()) << '\n';
  return kExitSuccess;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, std::size_t batch_size,
             std::ostream& out) {
  DCNetConfig mc = read_sidecar(ckpt);
  const data::Dataset d = load_input(data_path);
  if (d.image_size != mc.image_size) {
    throw UsageError(data_path + " has image size " + std::to_string(d.image_size) +
                     " but the checkpoint expects " + std::to_string(mc.image_size));
  }
  if (d.puzzles.empty()) throw UsageError(data_path + " holds no puzzles");
  model::DCNet net(mc, 0);
  try {
    load_checkpoint(ckpt, net.parameters());
  } catch (const binary::FormatError& e) {
    throw UsageError(e.what());
  }
  const std::vector<int> predicted = trainer::predictions(net, d.puzzles, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == d.puzzles[i].answer;
  const double acc = static_cast<double>(correct) / static_cast<double>(d.puzzles.size());
  out << "accuracy: " << format_double(acc) << " (" << correct << '/' << d.puzzles.size() << ")\n";
  return kExitSuccess;
}

int cmd_gradcheck(const std::optional<std::uint64_t>& seed_flag, std::ostream& out) {
  const std::uint64_t seed = resolve_seed(seed_flag, out);
  bool all = true;
  for (const GradSuiteEntry& e : run_gradient_suite(seed)) {
    all = all && e.passed();
    out << (e.passed() ? "PASS " : "FAIL ") << std::left << std::setw(40) << e.op
        << " max_rel " << std::scientific << std::setprecision(3) << e.report.max_relative_error
        << std::defaultfloat << std::setprecision(6) << "  checked " << e.report.checked
        << "  excluded " << e.report.excluded << '\n';
  }
  out << (all ? "all gradient checks passed" : "gradient check FAILED") << " (tolerance "
      << kGradientTolerance << ")\n";
  return all ? kExitSuccess : kExitNumerical;
}

struct ExperimentFlags {
  std::string data, test, out_csv, seeds;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

std::vector<std::uint64_t> experiment_seeds(const ExperimentFlags& f, std::ostream& out) {
  if (!f.seeds.empty()) return parse_seeds(f.seeds);
  return {resolve_seed(f.seed, out)};
}

int cmd_fewshot(const ExperimentFlags& f, const std::string& fractions_flag,
                const TrainFlags& tf, const ModelFlags& mf, std::ostream& out) {
  const std::vector<double> fractions = parse_fractions(fractions_flag);
  const std::vector<std::uint64_t> seeds = experiment_seeds(f, out);
  const data::Dataset train_set = load_input(f.data);
  const data::Dataset test_set = load_input(f.test);
  const DCNetConfig mc = mf.config(train_set.image_size, Ablation::full);
  const trainer::FewShotTable table = trainer::run_few_shot(
      fractions, mc, tf.config(seeds.front()), train_set.puzzles, test_set.puzzles, seeds, f.threads);
  const std::string csv = table.to_csv();
  if (!f.out_csv.empty()) write_text(f.out_csv, csv);
  out << csv;
  return kExitSuccess;
}

int cmd_ablation(const ExperimentFlags& f, const std::string& variants_flag,
                 const TrainFlags& tf, const ModelFlags& mf, std::ostream& out) {
  const std::vector<Ablation> variants = parse_variants(variants_flag);
  const std::vector<std::uint64_t> seeds = experiment_seeds(f, out);
  const data::Dataset train_set = load_input(f.data);
  const data::Dataset test_set = load_input(f.test);
  const DCNetConfig mc = mf.config(train_set.image_size, Ablation::full);
  for (Ablation v : variants) {
    DCNetConfig echo = mc;
    echo.ablation = v;
    out << "variant " << model::to_string(v) << ": channels=" << echo.stem_channels << '/'
        << echo.feature_channels << " hidden=" << echo.hidden << " dropout=" << echo.dropout_p
        << " epochs=" << tf.epochs << '\n';
  }
  const trainer::AblationTable table = trainer::run_ablation(
      variants, mc, tf.config(seeds.front()), train_set.puzzles, test_set.puzzles, seeds, f.threads);
  const std::string csv = table.to_csv();
  if (!f.out_csv.empty()) write_text(f.out_csv, csv);
  out << csv;
  return kExitSuccess;
}

/// Turns `--config-file PATH` into flags placed before the explicit ones, so that
/// explicit flags win under the take-last policy.
std::vector<std::string> expand_config_file(const std::vector<std::string>& args, CLI::App& app) {
  std::vector<std::string> rest;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config-file") {
      if (i + 1 >= args.size()) throw UsageError("--config-file needs a path");
      path = args[++i];
    } else if (args[i].rfind("--config-file=", 0) == 0) {
      path = args[i].substr(std::string("--config-file=").size());
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!path) return args;
  if (rest.empty() || rest[0].starts_with("-"))
    throw UsageError("--config-file must follow a command name");
  CLI::App* sub = nullptr;
  try {
    sub = app.get_subcommand(rest[0]);
  } catch (const CLI::OptionNotFound&) {
    throw UsageError("unknown command " + rest[0]);
  }
  std::vector<std::string> out{rest[0]};
  for (const auto& [key, value] : read_key_values(*path)) {
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "help" || key == "config-file") {
      throw UsageError("unknown key '" + key + "' in config file " + *path + " for command " +
                       rest[0]);
    }
    out.push_back("--" + key);
    out.push_back(value);
  }
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DCNet: synthetic RPM puzzles, training, and evaluation", "dcnet"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every command");
  app.get_formatter()->column_width(34);

  auto* gen = app.add_subcommand("gen", "Generate a puzzle dataset");
  GenFlags gf;
  gen->add_option("--n", gf.n, "Number of puzzles")->required()->check(CLI::PositiveNumber);
  gen->add_option("--config", gf.config, "Panel layout")
      ->capture_default_str()
      ->check(CLI::IsMember({"center", "grid2x2"}));
  gen->add_option("--size", gf.size, "Panel side in pixels")->capture_default_str();
  gen->add_option("--seed", gf.seed, "Seed; drawn from entropy and printed when omitted");
  gen->add_option("--out", gf.out, "Output dataset file")->required();
  gen->add_option("--threads", gf.threads, "Worker threads, 0 = all cores")->capture_default_str();

  auto* imp = app.add_subcommand("import", "Convert a directory of external puzzle files");
  std::string import_dir, import_out;
  std::size_t import_size = 96;
  imp->add_option("--dir", import_dir, "Directory of puzzle files")
      ->required()
      ->check(CLI::ExistingDirectory);
  imp->add_option("--out", import_out, "Output dataset file")->required();
  imp->add_option("--size", import_size, "Target panel side")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train one model");
  TrainCmdFlags tcf;
  TrainFlags train_flags;
  ModelFlags train_model;
  tr->add_option("--data", tcf.data, "Training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--test", tcf.test, "Test dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--ablation", tcf.ablation, "full | no_rule_contrast | no_choice_contrast")
      ->capture_default_str()
      ->check(CLI::IsMember({"full", "no_rule_contrast", "no_choice_contrast"}));
  tr->add_option("--seed", tcf.seed, "Seed; drawn from entropy and printed when omitted");
  tr->add_option("--out-ckpt", tcf.out_ckpt, "Checkpoint path (model config goes to PATH.cfg)");
  tr->add_option("--metrics", tcf.metrics, "Per-epoch metrics CSV");
  train_flags.add_to(*tr);
  train_model.add_to(*tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data;
  std::size_t eval_batch = 50;
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", eval_data, "Dataset to score")->required()->check(CLI::ExistingFile);
  ev->add_option("--batch-size", eval_batch, "Puzzles per forward pass")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::optional<std::uint64_t> gc_seed;
  gc->add_option("--seed", gc_seed, "Seed; drawn from entropy and printed when omitted");

  auto add_experiment = [](CLI::App* sub, ExperimentFlags& f) {
    sub->add_option("--data", f.data, "Training dataset")->required()->check(CLI::ExistingFile);
    sub->add_option("--test", f.test, "Test dataset")->required()->check(CLI::ExistingFile);
    auto* seed = sub->add_option("--seed", f.seed, "Single run seed; entropy when omitted");
    sub->add_option("--seeds", f.seeds, "Comma-separated run seeds")->excludes(seed);
    sub->add_option("--out", f.out_csv, "Result CSV");
    sub->add_option("--threads", f.threads, "Concurrent runs")->capture_default_str();
  };

  auto* fs = app.add_subcommand("fewshot", "Train on subsampled training sets");
  ExperimentFlags fsf;
  std::string fractions = "0.0625,0.125,0.25,0.5,1.0";
  TrainFlags fs_train;
  ModelFlags fs_model;
  add_experiment(fs, fsf);
  fs->add_option("--fractions", fractions, "Strictly increasing training fractions")
      ->capture_default_str();
  fs_train.add_to(*fs);
  fs_model.add_to(*fs);

  auto* ab = app.add_subcommand("ablation", "Compare model variants");
  ExperimentFlags abf;
  std::string variants = "full,no_rule_contrast,no_choice_contrast";
  TrainFlags ab_train;
  ModelFlags ab_model;
  add_experiment(ab, abf);
  ab->add_option("--variants", variants, "Comma-separated variants")->capture_default_str();
  ab_train.add_to(*ab);
  ab_model.add_to(*ab);

  for (CLI::App* sub : app.get_subcommands({})) {
    sub->add_option("--config-file", "key=value file with defaults for this command's flags");
  }

  try {
    std::vector<std::string> argv = expand_config_file(args, app);
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(gf, out, err);
    if (imp->parsed()) return cmd_import(import_dir, import_out, import_size, out);
    if (tr->parsed()) return cmd_train(tcf, train_flags, train_model, out);
    if (ev->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_batch, out);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, out);
    if (fs->parsed()) return cmd_fewshot(fsf, fractions, fs_train, fs_model, out);
    if (ab->parsed()) return cmd_ablation(abf, variants, ab_train, ab_model, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace dcnet::cli
