#include "dcnet/rpm/solver.hpp"

#include <algorithm>
#include <functional>

namespace dcnet::rpm {

namespace {

using Row = std::array<int, 3>;
using Grid = std::array<Row, 3>;

/// One candidate explanation of an attribute: checked on rows 0-1, then on row 2.
struct Hypothesis {
  std::function<bool(const Grid&)> context_fits;
  std::function<bool(const Grid&)> completes;
};

Hypothesis row_wise(std::function<bool(const Row&)> holds) {
  return {[holds](const Grid& g) { return holds(g[0]) && holds(g[1]); },
          [holds](const Grid& g) { return holds(g[2]); }};
}

bool same_set(Row a, Row b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

bool distinct(const Row& r) { return r[0] != r[1] && r[1] != r[2] && r[0] != r[2]; }

bool columns_differ(const Row& a, const Row& b) {
  return a[0] != b[0] && a[1] != b[1] && a[2] != b[2];
}

std::vector<Hypothesis> hypotheses_for(Attribute attribute) {
  std::vector<Hypothesis> hs;
  // Ungoverned attributes are constant within each row.
  hs.push_back(row_wise([](const Row& r) { return r[0] == r[1] && r[1] == r[2]; }));
  for (RuleKind kind : kinds_for(attribute)) {
    switch (kind) {
      case RuleKind::constant:
        hs.push_back({[](const Grid& g) {
                        const int v = g[0][0];
                        return std::all_of(g[0].begin(), g[0].end(), [v](int x) { return x == v; }) &&
                               std::all_of(g[1].begin(), g[1].end(), [v](int x) { return x == v; });
                      },
                      [](const Grid& g) {
                        const int v = g[0][0];
                        return std::all_of(g[2].begin(), g[2].end(), [v](int x) { return x == v; });
                      }});
        break;
      case RuleKind::progression:
        for (int s : {-2, -1, 1, 2})
          hs.push_back(row_wise([s](const Row& r) { return r[1] - r[0] == s && r[2] - r[1] == s; }));
        break;
      case RuleKind::arithmetic:
        hs.push_back(row_wise([](const Row& r) { return r[2] == r[0] + r[1]; }));
        hs.push_back(row_wise([](const Row& r) { return r[2] == r[0] - r[1]; }));
        break;
      case RuleKind::distribute_three:
        hs.push_back({[](const Grid& g) {
                        return distinct(g[0]) && same_set(g[0], g[1]) && columns_differ(g[0], g[1]);
                      },
                      [](const Grid& g) {
                        return same_set(g[0], g[2]) && columns_differ(g[0], g[2]) &&
                               columns_differ(g[1], g[2]);
                      }});
        break;
      case RuleKind::set_op:
        hs.push_back(row_wise([](const Row& r) { return r[2] == (r[0] & r[1]); }));
        hs.push_back(row_wise([](const Row& r) { return r[2] == (r[0] | r[1]); }));
        hs.push_back(row_wise([](const Row& r) { return r[2] == (r[0] ^ r[1]); }));
        break;
    }
  }
  return hs;
}

Grid grid_of(const std::array<AttributeVector, 8>& context, const AttributeVector& last,
             Attribute a) {
  Grid g{};
  for (int i = 0; i < 8; ++i) g[i / 3][i % 3] = value(context[i], a);
  g[2][2] = value(last, a);
  return g;
}

}  // namespace

std::vector<int> satisfying_choices(const std::array<AttributeVector, 8>& context,
                                    const std::array<AttributeVector, 8>& choices) {
  std::vector<int> valid;
  std::vector<std::pair<Attribute, std::vector<Hypothesis>>> inferred;
  for (Attribute a : kAllAttributes) {
    std::vector<Hypothesis> fits;
    const Grid g = grid_of(context, context[0], a);
    for (Hypothesis& h : hypotheses_for(a))
      if (h.context_fits(g)) fits.push_back(std::move(h));
    // Attributes with no consistent explanation constrain nothing.
    if (!fits.empty()) inferred.emplace_back(a, std::move(fits));
  }
  for (int c = 0; c < 8; ++c) {
    bool ok = true;
    for (const auto& [a, fits] : inferred) {
      const Grid g = grid_of(context, choices[c], a);
      ok = ok && std::any_of(fits.begin(), fits.end(), [&](const Hypothesis& h) { return h.completes(g); });
    }
    if (ok) valid.push_back(c);
  }
  return valid;
}

int solve_by_rules(const Puzzle& puzzle) {
  if (!puzzle.provenance) throw std::invalid_argument("solve_by_rules: puzzle has no provenance");
  const Provenance& p = *puzzle.provenance;
  std::array<AttributeVector, 8> context;
  std::copy_n(p.matrix.begin(), 8, context.begin());
  const auto valid = satisfying_choices(context, p.choices);
  if (valid.size() != 1) {
    throw AmbiguousPuzzle("ambiguous puzzle: " + std::to_string(valid.size()) +
                          " choices satisfy the inferred rules");
  }
  return valid[0];
}

}  // namespace dcnet::rpm
