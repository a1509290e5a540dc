#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcnet::rpm {

enum class ShapeType : std::uint8_t { triangle, square, pentagon, hexagon, circle };
inline constexpr int kShapeTypeCount = 5;

/// Panel layouts. Center holds one object filling the panel; Grid2x2 holds up
/// to four objects in the quadrant slots (bit i of the mask = slot i, row-major).
enum class Config : std::uint8_t { center, grid2x2 };

/// Mask bit for the single full-panel slot of the Center layout.
inline constexpr std::uint8_t kCenterSlot = 0x10;

enum class Attribute : std::uint8_t { shape, size, fill, count, position };
inline constexpr std::array kAllAttributes{Attribute::shape, Attribute::size, Attribute::fill,
                                           Attribute::count, Attribute::position};

enum class RuleKind : std::uint8_t { constant, progression, arithmetic, distribute_three, set_op };
inline constexpr std::array kAllRuleKinds{RuleKind::constant, RuleKind::progression,
                                          RuleKind::arithmetic, RuleKind::distribute_three,
                                          RuleKind::set_op};

enum class ArithmeticOp : std::uint8_t { plus, minus };
enum class SetOp : std::uint8_t { op_and, op_or, op_xor };

struct AttributeVector {
  ShapeType shape_type = ShapeType::circle;
  int size_level = 1;   // 1..5
  int fill_level = 1;   // 1..5, darker with higher level
  int count = 1;        // 1..4, equals popcount(position_mask)
  std::uint8_t position_mask = kCenterSlot;

  friend auto operator<=>(const AttributeVector&, const AttributeVector&) = default;
};

struct Rule {
  Attribute attribute = Attribute::shape;
  RuleKind kind = RuleKind::constant;
  int step = 0;  // progression only, one of -2,-1,+1,+2
  ArithmeticOp arithmetic = ArithmeticOp::plus;
  SetOp set_op = SetOp::op_and;

  friend bool operator==(const Rule&, const Rule&) = default;
};

struct RuleSet {
  Config config = Config::center;
  std::vector<Rule> rules;

  const Rule* find(Attribute a) const {
    for (const Rule& r : rules)
      if (r.attribute == a) return &r;
    return nullptr;
  }
  friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

/// Row-major 3x3 panel attributes; index 8 is the correct completion.
using AttributeMatrix = std::array<AttributeVector, 9>;

/// How one answer choice was derived from the correct panel.
struct Perturbation {
  bool is_answer = false;
  Attribute attribute = Attribute::shape;
  int from = 0;
  int to = 0;
  friend bool operator==(const Perturbation&, const Perturbation&) = default;
};

struct Provenance {
  RuleSet rules;
  AttributeMatrix matrix{};
  std::array<AttributeVector, 8> choices{};
  std::array<Perturbation, 8> perturbations{};
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// Square 8-bit grayscale image, row-major, 255 = white.
struct Image {
  std::size_t size = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t row, std::size_t col) const { return pixels[row * size + col]; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Puzzle {
  std::array<Image, 8> context;  // the 3x3 matrix minus its bottom-right panel
  std::array<Image, 8> choices;
  int answer = 0;
  std::size_t image_size = 0;
  std::optional<Provenance> provenance;
  friend bool operator==(const Puzzle&, const Puzzle&) = default;
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Attribute plumbing ---------------------------------------------------------

struct Range {
  int lo, hi;
};

/// Legal value range of an attribute when read through value(). Position covers
/// the Grid2x2 quadrant masks.
Range attribute_range(Attribute a);
int value(const AttributeVector& v, Attribute a);
/// Sets one field; count and position_mask are kept consistent.
void set_value(AttributeVector& v, Attribute a, int x);

/// Attributes that exist for a configuration.
std::vector<Attribute> attributes_for(Config config);
/// Rule kinds that may govern an attribute.
std::vector<RuleKind> kinds_for(Attribute a);

/// Mask with the lowest `count` slots occupied.
std::uint8_t canonical_mask(int count);
int popcount(std::uint8_t mask);

/// Number of independent attribute fields (shape, size, fill, layout) that differ.
/// Layout is the (count, position_mask) pair, which always changes together.
int field_distance(const AttributeVector& a, const AttributeVector& b);

std::string to_string(Config c);
std::string to_string(Attribute a);
std::string to_string(RuleKind k);
std::string to_string(const Rule& r);
std::optional<Config> parse_config(const std::string& s);

}  // namespace dcnet::rpm
