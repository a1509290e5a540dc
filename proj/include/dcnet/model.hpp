#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dcnet/ops.hpp"
#include "dcnet/optim.hpp"
#include "dcnet/rpm/types.hpp"

namespace dcnet::model {

enum class Ablation : std::uint8_t { full, no_rule_contrast, no_choice_contrast };

std::string to_string(Ablation a);
std::optional<Ablation> parse_ablation(const std::string& s);

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DCNetConfig {
  std::size_t image_size = 96;
  std::size_t stem_channels = 64;     // first conv and maxpool
  std::size_t feature_channels = 128; // residual block output, the triple embedding width
  std::size_t pooled_size = 2;        // adaptive pooling before the MLP
  std::size_t hidden = 256;
  double dropout_p = 0.5;
  Ablation ablation = Ablation::full;
  /// Test hook: choice contrast subtracts the plain candidate mean.
  bool identity_phi = false;
  /// Final linear layer starts at zero so every initial score is 0.
  bool zero_head = true;

  std::size_t feature_size() const { return image_size / 4; }
  std::size_t mlp_input_dim() const { return feature_channels * pooled_size * pooled_size; }
  void validate() const;
};

/// 10 row and 10 column triples per puzzle, each [P*10, 3, S, S], puzzle-major.
/// Index 0 and 1 are the context rows/columns, 2 + k embeds choice k.
struct TripleStack {
  Tensor rows;
  Tensor cols;
};

/// Pixels / 255 as [P, 16, S, S]: context panels 0..7 then choices 0..7.
Tensor panels_tensor(std::span<const rpm::Puzzle> puzzles);

TripleStack form_triples(const Tensor& panels);

/// Index of the highest score per row; ties resolve to the lowest index.
std::vector<int> predict(const Tensor& scores);

class DCNet {
 public:
  DCNet(const DCNetConfig& config, std::uint64_t init_seed);
  // Tensors are shared handles; a copy would alias the weights.
  DCNet(const DCNet&) = delete;
  DCNet& operator=(const DCNet&) = delete;

  const DCNetConfig& config() const noexcept { return config_; }
  std::vector<Parameter>& parameters() noexcept { return params_; }
  const std::vector<Parameter>& parameters() const noexcept { return params_; }
  Parameter& parameter(const std::string& name);

  /// [B, 3, S, S] -> [B, feature_channels, S/4, S/4].
  Tensor encode(const Tensor& triples, ops::Mode mode);
  /// f [P, 10, C, h, w] -> g [P, 8, C, h, w].
  Tensor rule_contrast(const Tensor& f) const;
  /// g [Q, 8, C, h, w] -> h [Q, 8, C, h, w]; one phi pass over all Q rows.
  Tensor choice_contrast(const Tensor& g, ops::Mode mode);
  /// h_rows, h_cols [P, 8, C, h, w] -> scores [P, 8].
  Tensor score_head(const Tensor& h_rows, const Tensor& h_cols, ops::Mode mode, Rng& dropout_rng);

  /// panels [P, 16, S, S] -> scores [P, 8]. Row and column triples of all
  /// puzzles share one encoder pass and one phi pass.
  Tensor forward(const Tensor& panels, ops::Mode mode, Rng& dropout_rng);

 private:
  struct BatchNorm {
    std::size_t gamma, beta;
    ops::RunningStats stats;
  };

  std::size_t add_param(std::string name, Tensor t, bool trainable = true);
  std::size_t add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k, Rng& rng);
  BatchNorm add_bn(const std::string& name, std::size_t channels);
  Tensor bn(BatchNorm& b, const Tensor& x, ops::Mode mode);
  const Tensor& w(std::size_t i) const { return params_[i].tensor; }

  DCNetConfig config_;
  std::vector<Parameter> params_;
  std::size_t conv1_, res_a_, res_b_, res_proj_, phi_conv_ = 0;
  BatchNorm bn1_, res_bn_a_, res_bn_b_, res_bn_proj_, phi_bn_{};
  std::size_t fc1_w_, fc1_b_, fc2_w_, fc2_b_;
};

}  // namespace dcnet::model
