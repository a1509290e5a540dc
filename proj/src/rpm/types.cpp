#include "dcnet/rpm/types.hpp"

#include <bit>

namespace dcnet::rpm {

Range attribute_range(Attribute a) {
  switch (a) {
    case Attribute::shape: return {0, kShapeTypeCount - 1};
    case Attribute::size: return {1, 5};
    case Attribute::fill: return {1, 5};
    case Attribute::count: return {1, 4};
    case Attribute::position: return {1, 15};
  }
  throw std::invalid_argument("unknown attribute");
}

int value(const AttributeVector& v, Attribute a) {
  switch (a) {
    case Attribute::shape: return static_cast<int>(v.shape_type);
    case Attribute::size: return v.size_level;
    case Attribute::fill: return v.fill_level;
    case Attribute::count: return v.count;
    case Attribute::position: return v.position_mask;
  }
  throw std::invalid_argument("unknown attribute");
}

void set_value(AttributeVector& v, Attribute a, int x) {
  const Range r = attribute_range(a);
  if (x < r.lo || x > r.hi) {
    throw std::out_of_range(to_string(a) + " value " + std::to_string(x) + " outside [" +
                            std::to_string(r.lo) + ", " + std::to_string(r.hi) + "]");
  }
  switch (a) {
    case Attribute::shape: v.shape_type = static_cast<ShapeType>(x); break;
    case Attribute::size: v.size_level = x; break;
    case Attribute::fill: v.fill_level = x; break;
    case Attribute::count:
      v.count = x;
      v.position_mask = canonical_mask(x);
      break;
    case Attribute::position:
      v.position_mask = static_cast<std::uint8_t>(x);
      v.count = popcount(v.position_mask);
      break;
  }
}

std::vector<Attribute> attributes_for(Config config) {
  if (config == Config::center) return {Attribute::shape, Attribute::size, Attribute::fill};
  return {Attribute::shape, Attribute::size, Attribute::fill, Attribute::count, Attribute::position};
}

std::vector<RuleKind> kinds_for(Attribute a) {
  switch (a) {
    case Attribute::shape:
      return {RuleKind::constant, RuleKind::progression, RuleKind::distribute_three};
    case Attribute::size:
    case Attribute::fill:
    case Attribute::count:
      return {RuleKind::constant, RuleKind::progression, RuleKind::arithmetic,
              RuleKind::distribute_three};
    case Attribute::position: return {RuleKind::constant, RuleKind::set_op};
  }
  throw std::invalid_argument("unknown attribute");
}

std::uint8_t canonical_mask(int count) {
  if (count < 1 || count > 4) throw std::out_of_range("count must be in 1..4");
  return static_cast<std::uint8_t>((1u << count) - 1u);
}

int popcount(std::uint8_t mask) { return std::popcount(static_cast<unsigned>(mask)); }

int field_distance(const AttributeVector& a, const AttributeVector& b) {
  return (a.shape_type != b.shape_type) + (a.size_level != b.size_level) +
         (a.fill_level != b.fill_level) +
         (a.count != b.count || a.position_mask != b.position_mask);
}

std::string to_string(Config c) { return c == Config::center ? "center" : "grid2x2"; }

std::string to_string(Attribute a) {
  switch (a) {
    case Attribute::shape: return "shape";
    case Attribute::size: return "size";
    case Attribute::fill: return "fill";
    case Attribute::count: return "count";
    case Attribute::position: return "position";
  }
  return "?";
}

std::string to_string(RuleKind k) {
  switch (k) {
    case RuleKind::constant: return "constant";
    case RuleKind::progression: return "progression";
    case RuleKind::arithmetic: return "arithmetic";
    case RuleKind::distribute_three: return "distribute_three";
    case RuleKind::set_op: return "set_op";
  }
  return "?";
}

std::string to_string(const Rule& r) {
  std::string s = to_string(r.attribute) + ":" + to_string(r.kind);
  if (r.kind == RuleKind::progression) s += "(" + std::string(r.step > 0 ? "+" : "") + std::to_string(r.step) + ")";
  if (r.kind == RuleKind::arithmetic) s += r.arithmetic == ArithmeticOp::plus ? "(plus)" : "(minus)";
  if (r.kind == RuleKind::set_op) {
    static const char* names[] = {"(and)", "(or)", "(xor)"};
    s += names[static_cast<int>(r.set_op)];
  }
  return s;
}

std::optional<Config> parse_config(const std::string& s) {
  if (s == "center") return Config::center;
  if (s == "grid2x2") return Config::grid2x2;
  return std::nullopt;
}

}  // namespace dcnet::rpm
