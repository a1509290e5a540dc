#include "dcnet/model.hpp"

#include <algorithm>
#include <cmath>

namespace dcnet::model {

using ops::Mode;
using dcnet::to_string;

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_rule_contrast: return "no_rule_contrast";
    case Ablation::no_choice_contrast: return "no_choice_contrast";
  }
  return "?";
}

std::optional<Ablation> parse_ablation(const std::string& s) {
  for (Ablation a : {Ablation::full, Ablation::no_rule_contrast, Ablation::no_choice_contrast})
    if (s == to_string(a)) return a;
  return std::nullopt;
}

void DCNetConfig::validate() const {
  if (image_size < 8 || image_size % 4 != 0)
    throw ConfigError("image_size must be a positive multiple of 4 (at least 8), got " + std::to_string(image_size));
  if (stem_channels == 0 || feature_channels == 0 || hidden == 0 || pooled_size == 0)
    throw ConfigError("channel counts, hidden width and pooled size must be positive");
  if (pooled_size > feature_size())
    throw ConfigError("pooled_size " + std::to_string(pooled_size) + " exceeds feature map size " +
                      std::to_string(feature_size()));
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout_p must be in [0, 1)");
}

Tensor panels_tensor(std::span<const rpm::Puzzle> puzzles) {
  if (puzzles.empty()) throw std::invalid_argument("panels_tensor: empty batch");
  const std::size_t S = puzzles.front().image_size;
  const std::size_t px = S * S;
  Tensor out(Shape{puzzles.size(), 16, S, S});
  double* dst = out.data().data();
  for (const auto& p : puzzles) {
    if (p.image_size != S) throw std::invalid_argument("panels_tensor: mixed image sizes in batch");
    for (int i = 0; i < 16; ++i) {
      const rpm::Image& img = i < 8 ? p.context[i] : p.choices[i - 8];
      if (img.pixels.size() != px) throw std::invalid_argument("panels_tensor: image does not match image_size");
      for (std::uint8_t v : img.pixels) *dst++ = v / 255.0;
    }
  }
  return out;
}

TripleStack form_triples(const Tensor& panels) {
  if (panels.rank() != 4 || panels.dim(1) != 16)
    throw ShapeError("form_triples: expected [P,16,S,S], got " + to_string(panels.shape()));
  const std::size_t P = panels.dim(0), px = panels.dim(2) * panels.dim(3);
  // Panels 0..7 are context, 8 + k is choice k.
  auto row_panels = [](std::size_t j) -> std::array<int, 3> {
    if (j == 0) return {0, 1, 2};
    if (j == 1) return {3, 4, 5};
    return {6, 7, static_cast<int>(8 + j - 2)};
  };
  auto col_panels = [](std::size_t j) -> std::array<int, 3> {
    if (j == 0) return {0, 3, 6};
    if (j == 1) return {1, 4, 7};
    return {2, 5, static_cast<int>(8 + j - 2)};
  };
  TripleStack t{Tensor(Shape{P * 10, 3, panels.dim(2), panels.dim(3)}),
                Tensor(Shape{P * 10, 3, panels.dim(2), panels.dim(3)})};
  const double* src = panels.data().data();
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t j = 0; j < 10; ++j) {
      const auto r = row_panels(j), c = col_panels(j);
      for (std::size_t k = 0; k < 3; ++k) {
        std::copy_n(src + (p * 16 + r[k]) * px, px, t.rows.data().data() + ((p * 10 + j) * 3 + k) * px);
        std::copy_n(src + (p * 16 + c[k]) * px, px, t.cols.data().data() + ((p * 10 + j) * 3 + k) * px);
      }
    }
  return t;
}

std::vector<int> predict(const Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("predict: expected [P, choices], got " + to_string(scores.shape()));
  std::vector<int> out(scores.dim(0));
  const std::size_t K = scores.dim(1);
  for (std::size_t p = 0; p < out.size(); ++p) {
    int best = 0;
    for (std::size_t k = 1; k < K; ++k)
      if (scores.data()[p * K + k] > scores.data()[p * K + best]) best = static_cast<int>(k);
    out[p] = best;
  }
  return out;
}

// DCNet -------------------------------------------------------------------

std::size_t DCNet::add_param(std::string name, Tensor t, bool trainable) {
  params_.emplace_back(std::move(name), std::move(t), trainable);
  return params_.size() - 1;
}

std::size_t DCNet::add_conv(const std::string& name, std::size_t out, std::size_t in, std::size_t k,
                            Rng& rng) {
  Tensor weight(Shape{out, in, k, k});
  const double std = std::sqrt(2.0 / static_cast<double>(in * k * k));
  for (double& v : weight.data()) v = std * standard_normal(rng);
  return add_param(name + ".weight", weight);
}

DCNet::BatchNorm DCNet::add_bn(const std::string& name, std::size_t channels) {
  BatchNorm b;
  b.gamma = add_param(name + ".weight", Tensor::filled({channels}, 1.0));
  b.beta = add_param(name + ".bias", Tensor({channels}));
  b.stats = ops::RunningStats::identity(channels);
  add_param(name + ".running_mean", b.stats.mean, false);
  add_param(name + ".running_var", b.stats.var, false);
  return b;
}

DCNet::DCNet(const DCNetConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  Rng rng(init_seed);
  const std::size_t C0 = config_.stem_channels, C1 = config_.feature_channels;
  conv1_ = add_conv("encoder.conv1", C0, 3, 7, rng);
  bn1_ = add_bn("encoder.bn1", C0);
  res_a_ = add_conv("encoder.res.conv_a", C1, C0, 3, rng);
  res_bn_a_ = add_bn("encoder.res.bn_a", C1);
  res_b_ = add_conv("encoder.res.conv_b", C1, C1, 3, rng);
  res_bn_b_ = add_bn("encoder.res.bn_b", C1);
  res_proj_ = add_conv("encoder.res.proj", C1, C0, 1, rng);
  res_bn_proj_ = add_bn("encoder.res.bn_proj", C1);

  const std::size_t D = config_.mlp_input_dim(), Hd = config_.hidden;
  Tensor fc1({D, Hd});
  const double std1 = std::sqrt(2.0 / static_cast<double>(D));
  for (double& v : fc1.data()) v = std1 * standard_normal(rng);
  fc1_w_ = add_param("head.fc1.weight", fc1);
  fc1_b_ = add_param("head.fc1.bias", Tensor({Hd}));
  Tensor fc2({Hd, 1});
  if (!config_.zero_head) {
    const double std2 = std::sqrt(1.0 / static_cast<double>(Hd));
    for (double& v : fc2.data()) v = std2 * standard_normal(rng);
  }
  fc2_w_ = add_param("head.fc2.weight", fc2);
  fc2_b_ = add_param("head.fc2.bias", Tensor({1}));

  // Drawn last so the other variants' initial weights match the full model's.
  if (config_.ablation != Ablation::no_choice_contrast && !config_.identity_phi) {
    phi_conv_ = add_conv("phi.conv", C1, C1, 3, rng);
    phi_bn_ = add_bn("phi.bn", C1);
  }
}

Parameter& DCNet::parameter(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + name);
}

Tensor DCNet::bn(BatchNorm& b, const Tensor& x, Mode mode) {
  return ops::batchnorm2d(x, w(b.gamma), w(b.beta), b.stats, mode);
}

Tensor DCNet::encode(const Tensor& triples, Mode mode) {
  if (triples.rank() != 4 || triples.dim(1) != 3 || triples.dim(2) != config_.image_size ||
      triples.dim(3) != config_.image_size) {
    throw ShapeError("encode: expected [B,3," + std::to_string(config_.image_size) + "," +
                     std::to_string(config_.image_size) + "], got " + to_string(triples.shape()));
  }
  Tensor x = ops::relu(bn(bn1_, ops::conv2d(triples, w(conv1_), {}, 2, 3), mode));
  x = ops::maxpool2d(x, 3, 2, 1);
  Tensor a = ops::relu(bn(res_bn_a_, ops::conv2d(x, w(res_a_), {}, 1, 1), mode));
  a = bn(res_bn_b_, ops::conv2d(a, w(res_b_), {}, 1, 1), mode);
  Tensor shortcut = bn(res_bn_proj_, ops::conv2d(x, w(res_proj_), {}, 1, 0), mode);
  return ops::relu(ops::add(a, shortcut));
}

Tensor DCNet::rule_contrast(const Tensor& f) const {
  if (f.rank() != 5 || f.dim(1) != 10) throw ShapeError("rule_contrast: expected [P,10,C,h,w], got " + to_string(f.shape()));
  Tensor candidates = ops::narrow(f, 1, 2, 8);
  if (config_.ablation == Ablation::no_rule_contrast) return candidates;
  Tensor centroid = ops::scale(ops::add(ops::narrow(f, 1, 0, 1), ops::narrow(f, 1, 1, 1)), 0.5);
  return ops::sub(candidates, ops::expand(centroid, 1, 8));
}

Tensor DCNet::choice_contrast(const Tensor& g, Mode mode) {
  if (g.rank() != 5 || g.dim(1) != 8) throw ShapeError("choice_contrast: expected [Q,8,C,h,w], got " + to_string(g.shape()));
  if (config_.ablation == Ablation::no_choice_contrast) return g;
  Tensor centre = ops::mean_over(g, 1);
  if (!config_.identity_phi) centre = bn(phi_bn_, ops::conv2d(centre, w(phi_conv_), {}, 1, 1), mode);
  Shape s = g.shape();
  s[1] = 1;
  return ops::sub(g, ops::expand(ops::reshape(centre, s), 1, 8));
}

Tensor DCNet::score_head(const Tensor& h_rows, const Tensor& h_cols, Mode mode, Rng& dropout_rng) {
  if (h_rows.shape() != h_cols.shape() || h_rows.rank() != 5 || h_rows.dim(1) != 8)
    throw ShapeError("score_head: row and column features must both be [P,8,C,h,w]");
  const std::size_t P = h_rows.dim(0);
  Tensor s = ops::reshape(ops::add(h_rows, h_cols), {P * 8, h_rows.dim(2), h_rows.dim(3), h_rows.dim(4)});
  Tensor x = ops::flatten(ops::adaptive_avg_pool2d(s, config_.pooled_size, config_.pooled_size), 1);
  if (x.dim(1) != config_.mlp_input_dim()) {
    throw ConfigError("score_head: pooled feature length " + std::to_string(x.dim(1)) +
                      " differs from mlp_input_dim " + std::to_string(config_.mlp_input_dim()));
  }
  Tensor y = ops::relu(ops::linear(x, w(fc1_w_), w(fc1_b_)));
  y = ops::dropout(y, config_.dropout_p, mode, dropout_rng);
  y = ops::linear(y, w(fc2_w_), w(fc2_b_));
  return ops::reshape(y, {P, 8});
}

Tensor DCNet::forward(const Tensor& panels, Mode mode, Rng& dropout_rng) {
  const TripleStack t = form_triples(panels);
  const std::size_t P = panels.dim(0);
  const std::array<Tensor, 2> streams{t.rows, t.cols};
  Tensor f = encode(ops::concat(streams, 0), mode);
  f = ops::reshape(f, {2 * P, 10, f.dim(1), f.dim(2), f.dim(3)});
  Tensor h = choice_contrast(rule_contrast(f), mode);
  return score_head(ops::narrow(h, 0, 0, P), ops::narrow(h, 0, P, P), mode, dropout_rng);
}

}  // namespace dcnet::model
