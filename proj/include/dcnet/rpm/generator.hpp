#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcnet/random.hpp"
#include "dcnet/rpm/types.hpp"

namespace dcnet::rpm {

/// Draws 1..4 rules over distinct attributes of the configuration. In Grid2x2
/// count and position form one layout group and at most one of them is governed.
/// Throws GenerationError after 1000 consecutive rejected draws.
RuleSet sample_ruleset(Config config, Rng& rng);

/// True when some in-range row satisfies the rule.
bool rule_feasible(const Rule& rule);

/// Every row satisfies every rule; ungoverned attributes are constant within a
/// row and drawn independently per row.
AttributeMatrix instantiate_matrix(const RuleSet& rules, Rng& rng);

struct Distractors {
  std::array<AttributeVector, 7> values;
  std::array<Perturbation, 7> log;
};

/// Seven pairwise-distinct panels, each differing from `target` in exactly one
/// attribute field, moved to the nearest unused legal value in a random direction.
Distractors make_distractors(const AttributeVector& target, const RuleSet& rules, Rng& rng);

/// One validated puzzle: the solver must recover the stored answer uniquely.
/// Rejected draws are retried from the same generator stream.
Puzzle generate_puzzle(Config config, std::size_t image_size, std::uint64_t seed);

/// Puzzle i is generate_puzzle(config, image_size, mix_seed(seed, i)).
/// `threads` = 0 picks the hardware concurrency.
std::vector<Puzzle> generate_dataset(std::size_t n, Config config, std::size_t image_size,
                                     std::uint64_t seed, unsigned threads = 0);

}  // namespace dcnet::rpm
