#pragma once

#include <cstddef>

#include "dcnet/random.hpp"
#include "dcnet/rpm/types.hpp"

namespace dcnet::rpm {

inline constexpr std::size_t kMinImageSize = 16;

/// Gray interior value for a fill level.
std::uint8_t fill_gray(int fill_level);

/// Draws every occupied slot: black outline, gray interior, white background.
/// Each object's center is jittered by up to one pixel per axis from `rng`.
Image rasterize(const AttributeVector& attrs, std::size_t image_size, Rng& rng);

}  // namespace dcnet::rpm
