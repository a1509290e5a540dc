#include "dcnet/rpm/raster.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dcnet::rpm {

namespace {

struct Point {
  double x, y;
};

int vertex_count(ShapeType s) {
  switch (s) {
    case ShapeType::triangle: return 3;
    case ShapeType::square: return 4;
    case ShapeType::pentagon: return 5;
    case ShapeType::hexagon: return 6;
    case ShapeType::circle: return 0;
  }
  return 0;
}

double segment_distance(Point p, Point a, Point b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(p.x - a.x - t * dx, p.y - a.y - t * dy);
}

/// Negative inside, positive outside.
double signed_distance(Point p, ShapeType shape, Point c, double radius,
                       const std::vector<Point>& poly) {
  if (shape == ShapeType::circle) return std::hypot(p.x - c.x, p.y - c.y) - radius;
  double d = 1e300;
  bool inside = true;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Point a = poly[i], b = poly[(i + 1) % poly.size()];
    d = std::min(d, segment_distance(p, a, b));
    // Vertices run counter-clockwise in screen space, so the interior is on the right.
    const double cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    inside = inside && cross >= 0.0;
  }
  return inside ? -d : d;
}

}  // namespace

std::uint8_t fill_gray(int fill_level) {
  if (fill_level < 1 || fill_level > 5) throw std::out_of_range("fill_level must be in 1..5");
  return static_cast<std::uint8_t>(255 - 40 * fill_level);
}

Image rasterize(const AttributeVector& attrs, std::size_t image_size, Rng& rng) {
  if (image_size < kMinImageSize)
    throw std::invalid_argument("image_size must be at least " + std::to_string(kMinImageSize));
  const double S = static_cast<double>(image_size);
  Image img{image_size, std::vector<std::uint8_t>(image_size * image_size, 255)};

  std::vector<std::pair<Point, double>> slots;  // center, extent
  if (attrs.position_mask & kCenterSlot) slots.push_back({{S / 2, S / 2}, S});
  for (int s = 0; s < 4; ++s)
    if (attrs.position_mask & (1u << s))
      slots.push_back({{S * (0.25 + 0.5 * (s % 2)), S * (0.25 + 0.5 * (s / 2))}, S / 2});

  const double half_stroke = std::max(0.5, S / 64.0);
  const std::uint8_t gray = fill_gray(attrs.fill_level);
  const int n = vertex_count(attrs.shape_type);
  for (auto [center, extent] : slots) {
    center.x += uniform_int(rng, -1, 1);
    center.y += uniform_int(rng, -1, 1);
    // Affine in size_level so that size 1 still shows its fill level at 32 px.
    const double radius = 0.45 * extent * (0.4 + 0.12 * attrs.size_level);
    std::vector<Point> poly;
    const double start = -std::numbers::pi / 2 + (n % 2 == 0 && n > 0 ? std::numbers::pi / n : 0.0);
    for (int k = 0; k < n; ++k) {
      const double t = start + 2 * std::numbers::pi * k / n;
      poly.push_back({center.x + radius * std::cos(t), center.y + radius * std::sin(t)});
    }
    const int lo_y = std::max(0, static_cast<int>(center.y - radius - 2));
    const int hi_y = std::min(static_cast<int>(image_size) - 1, static_cast<int>(center.y + radius + 2));
    const int lo_x = std::max(0, static_cast<int>(center.x - radius - 2));
    const int hi_x = std::min(static_cast<int>(image_size) - 1, static_cast<int>(center.x + radius + 2));
    for (int y = lo_y; y <= hi_y; ++y)
      for (int x = lo_x; x <= hi_x; ++x) {
        const double d = signed_distance({x + 0.5, y + 0.5}, attrs.shape_type, center, radius, poly);
        std::uint8_t& px = img.pixels[static_cast<std::size_t>(y) * image_size + x];
        if (std::abs(d) <= half_stroke) px = 0;
        else if (d < 0) px = gray;
      }
  }
  return img;
}

}  // namespace dcnet::rpm
