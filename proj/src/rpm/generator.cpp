#include "dcnet/rpm/generator.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <exception>
#include <mutex>
#include <thread>

#include "dcnet/rpm/raster.hpp"
#include "dcnet/rpm/solver.hpp"

namespace dcnet::rpm {

namespace {

constexpr int kMaxRejections = 1000;
constexpr std::array kSteps{-2, -1, 1, 2};

using Row = std::array<int, 3>;
using Field = std::array<int, 9>;

/// All in-range rows for the row-wise rule kinds.
std::vector<Row> row_options(const Rule& rule) {
  const Range r = attribute_range(rule.attribute);
  auto in = [&](int v) { return v >= r.lo && v <= r.hi; };
  std::vector<Row> rows;
  switch (rule.kind) {
    case RuleKind::progression:
      for (int a = r.lo; a <= r.hi; ++a)
        if (in(a + rule.step) && in(a + 2 * rule.step)) rows.push_back({a, a + rule.step, a + 2 * rule.step});
      break;
    case RuleKind::arithmetic:
      for (int a = r.lo; a <= r.hi; ++a)
        for (int b = r.lo; b <= r.hi; ++b) {
          const int c = rule.arithmetic == ArithmeticOp::plus ? a + b : a - b;
          if (in(c)) rows.push_back({a, b, c});
        }
      break;
    case RuleKind::set_op:
      for (int a = r.lo; a <= r.hi; ++a)
        for (int b = r.lo; b <= r.hi; ++b) {
          const int c = rule.set_op == SetOp::op_and ? (a & b) : rule.set_op == SetOp::op_or ? (a | b) : (a ^ b);
          if (in(c)) rows.push_back({a, b, c});
        }
      break;
    case RuleKind::constant:
    case RuleKind::distribute_three:
      break;
  }
  return rows;
}

Rule draw_rule(Attribute attribute, Rng& rng) {
  const auto kinds = kinds_for(attribute);
  Rule rule;
  rule.attribute = attribute;
  rule.kind = kinds[uniform_index(rng, kinds.size())];
  if (rule.kind == RuleKind::progression) rule.step = kSteps[uniform_index(rng, kSteps.size())];
  if (rule.kind == RuleKind::arithmetic) rule.arithmetic = static_cast<ArithmeticOp>(uniform_index(rng, 2));
  if (rule.kind == RuleKind::set_op) rule.set_op = static_cast<SetOp>(uniform_index(rng, 3));
  return rule;
}

Field fill_field(const Rule* rule, Attribute attribute, Rng& rng) {
  const Range r = attribute_range(attribute);
  Field f{};
  if (rule == nullptr) {
    for (int row = 0; row < 3; ++row) {
      const int v = uniform_int(rng, r.lo, r.hi);
      for (int c = 0; c < 3; ++c) f[row * 3 + c] = v;
    }
    return f;
  }
  switch (rule->kind) {
    case RuleKind::constant:
      f.fill(uniform_int(rng, r.lo, r.hi));
      return f;
    case RuleKind::distribute_three: {
      std::vector<int> pool;
      for (int v = r.lo; v <= r.hi; ++v) pool.push_back(v);
      shuffle(pool.begin(), pool.end(), rng);
      const int shift = uniform_int(rng, 1, 2);
      for (int row = 0; row < 3; ++row)
        for (int c = 0; c < 3; ++c) f[row * 3 + c] = pool[(c + row * shift) % 3];
      return f;
    }
    default: {
      const auto rows = row_options(*rule);
      if (rows.empty()) throw GenerationError("rule " + to_string(*rule) + " has no in-range row");
      for (int row = 0; row < 3; ++row) {
        const Row& pick = rows[uniform_index(rng, rows.size())];
        for (int c = 0; c < 3; ++c) f[row * 3 + c] = pick[c];
      }
      return f;
    }
  }
}

Attribute layout_attribute(const RuleSet& rules) {
  return rules.find(Attribute::count) ? Attribute::count : Attribute::position;
}

}  // namespace

bool rule_feasible(const Rule& rule) {
  const Range r = attribute_range(rule.attribute);
  switch (rule.kind) {
    case RuleKind::constant: return true;
    case RuleKind::distribute_three: return r.hi - r.lo + 1 >= 3;
    default: return !row_options(rule).empty();
  }
}

RuleSet sample_ruleset(Config config, Rng& rng) {
  // Groups of mutually exclusive attributes; the layout group is last for Grid2x2.
  std::vector<std::vector<Attribute>> groups{{Attribute::shape}, {Attribute::size}, {Attribute::fill}};
  if (config == Config::grid2x2) groups.push_back({Attribute::count, Attribute::position});

  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 4));
    if (k > groups.size()) continue;
    std::vector<std::size_t> order(groups.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order.begin(), order.end(), rng);
    order.resize(k);
    std::sort(order.begin(), order.end());

    RuleSet set{config, {}};
    bool ok = true;
    for (std::size_t g : order) {
      const auto& group = groups[g];
      const Attribute a = group[uniform_index(rng, group.size())];
      set.rules.push_back(draw_rule(a, rng));
      ok = ok && rule_feasible(set.rules.back());
    }
    if (ok) return set;
  }
  throw GenerationError("sample_ruleset: " + std::to_string(kMaxRejections) +
                        " consecutive infeasible rule draws for " + to_string(config));
}

AttributeMatrix instantiate_matrix(const RuleSet& rules, Rng& rng) {
  for (const Rule& rule : rules.rules) {
    const auto allowed = attributes_for(rules.config);
    if (std::find(allowed.begin(), allowed.end(), rule.attribute) == allowed.end())
      throw GenerationError(to_string(rule) + " is not valid for " + to_string(rules.config));
    const auto kinds = kinds_for(rule.attribute);
    if (std::find(kinds.begin(), kinds.end(), rule.kind) == kinds.end())
      throw GenerationError(to_string(rule) + " is not a legal rule kind for its attribute");
  }
  if (rules.find(Attribute::count) && rules.find(Attribute::position))
    throw GenerationError("count and position cannot both be governed");

  AttributeMatrix m{};
  for (Attribute a : {Attribute::shape, Attribute::size, Attribute::fill}) {
    const Field f = fill_field(rules.find(a), a, rng);
    for (int i = 0; i < 9; ++i) set_value(m[i], a, f[i]);
  }
  if (rules.config == Config::grid2x2) {
    const Attribute a = layout_attribute(rules);
    const Field f = fill_field(rules.find(a), a, rng);
    for (int i = 0; i < 9; ++i) set_value(m[i], a, f[i]);
  }
  return m;
}

Distractors make_distractors(const AttributeVector& target, const RuleSet& rules, Rng& rng) {
  std::vector<Attribute> attrs{Attribute::shape, Attribute::size, Attribute::fill};
  if (rules.config == Config::grid2x2) attrs.push_back(layout_attribute(rules));

  std::vector<std::vector<int>> used(attrs.size());
  for (std::size_t i = 0; i < attrs.size(); ++i) used[i].push_back(value(target, attrs[i]));
  auto is_used = [&](std::size_t i, int v) {
    return std::find(used[i].begin(), used[i].end(), v) != used[i].end();
  };
  auto has_alternative = [&](std::size_t i) {
    const Range r = attribute_range(attrs[i]);
    return static_cast<int>(used[i].size()) < r.hi - r.lo + 1;
  };

  Distractors out;
  for (std::size_t k = 0; k < 7; ++k) {
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < attrs.size(); ++i)
      if (has_alternative(i)) open.push_back(i);
    if (open.empty()) throw GenerationError("attribute space too small for 7 distinct distractors");
    const std::size_t i = open[uniform_index(rng, open.size())];
    const Attribute a = attrs[i];
    const int from = value(target, a);
    const Range r = attribute_range(a);

    int to = 0;
    if (a == Attribute::position) {
      // Nearest in slot-flip distance, ties broken at random.
      std::vector<int> best;
      int best_d = 99;
      for (int v = r.lo; v <= r.hi; ++v) {
        if (is_used(i, v)) continue;
        const int d = std::popcount(static_cast<unsigned>(v ^ from));
        if (d < best_d) best = {}, best_d = d;
        if (d == best_d) best.push_back(v);
      }
      to = best[uniform_index(rng, best.size())];
    } else {
      const int first = uniform_index(rng, 2) == 0 ? -1 : 1;
      bool found = false;
      for (int dir : {first, -first}) {
        for (int v = from + dir; v >= r.lo && v <= r.hi && !found; v += dir)
          if (!is_used(i, v)) to = v, found = true;
        if (found) break;
      }
    }
    used[i].push_back(to);
    out.values[k] = target;
    set_value(out.values[k], a, to);
    out.log[k] = Perturbation{false, a, from, to};
  }
  return out;
}

Puzzle generate_puzzle(Config config, std::size_t image_size, std::uint64_t seed) {
  if (image_size < kMinImageSize)
    throw std::invalid_argument("image_size must be at least " + std::to_string(kMinImageSize));
  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    Provenance prov;
    prov.rules = sample_ruleset(config, rng);
    prov.matrix = instantiate_matrix(prov.rules, rng);
    Distractors d;
    try {
      d = make_distractors(prov.matrix[8], prov.rules, rng);
    } catch (const GenerationError&) {
      continue;
    }
    const int answer = static_cast<int>(uniform_index(rng, 8));
    for (int c = 0, k = 0; c < 8; ++c) {
      if (c == answer) {
        prov.choices[c] = prov.matrix[8];
        prov.perturbations[c] = Perturbation{true, Attribute::shape, 0, 0};
      } else {
        prov.choices[c] = d.values[k];
        prov.perturbations[c] = d.log[k];
        ++k;
      }
    }
    std::array<AttributeVector, 8> context;
    std::copy_n(prov.matrix.begin(), 8, context.begin());
    const auto sat = satisfying_choices(context, prov.choices);
    if (sat.size() != 1 || sat[0] != answer) continue;

    Puzzle p;
    p.answer = answer;
    p.image_size = image_size;
    for (int i = 0; i < 8; ++i) p.context[i] = rasterize(context[i], image_size, rng);
    for (int i = 0; i < 8; ++i) p.choices[i] = rasterize(prov.choices[i], image_size, rng);
    p.provenance = std::move(prov);
    return p;
  }
  throw GenerationError("no valid puzzle after " + std::to_string(kMaxRejections) +
                        " attempts for seed " + std::to_string(seed));
}

std::vector<Puzzle> generate_dataset(std::size_t n, Config config, std::size_t image_size,
                                     std::uint64_t seed, unsigned threads) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be at least 1");
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));

  std::vector<Puzzle> out(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = generate_puzzle(config, image_size, mix_seed(seed, i));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace dcnet::rpm
