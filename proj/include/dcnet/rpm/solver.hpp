#pragma once

#include <array>
#include <stdexcept>
#include <vector>

#include "dcnet/rpm/types.hpp"

namespace dcnet::rpm {

struct AmbiguousPuzzle : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Indices of choices that complete the third row consistently with every rule
/// hypothesis inferred from the first two rows. Uses attributes only.
std::vector<int> satisfying_choices(const std::array<AttributeVector, 8>& context,
                                    const std::array<AttributeVector, 8>& choices);

/// The unique satisfying choice. Reads provenance attributes, never the stored
/// rules or answer. Throws AmbiguousPuzzle on zero or several matches and
/// std::invalid_argument when provenance is absent.
int solve_by_rules(const Puzzle& puzzle);

}  // namespace dcnet::rpm
