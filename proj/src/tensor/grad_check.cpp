#include "dcnet/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dcnet/random.hpp"

namespace dcnet {

namespace {

double evaluate(const std::function<Tensor(std::span<const Tensor>)>& f,
                const std::vector<Tensor>& inputs) {
  const Tensor out = f(inputs);
  if (out.numel() != 1) throw ShapeError("grad_check: function must return a scalar");
  return out.item();
}

std::vector<std::size_t> sample_coords(std::size_t n, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (n <= limit) return all;
  for (std::size_t i = 0; i < limit; ++i) std::swap(all[i], all[i + uniform_index(rng, n - i)]);
  all.resize(limit);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor(std::span<const Tensor>)>& f,
                           std::vector<Tensor> inputs, const GradCheckOptions& options) {
  std::vector<bool> had_grad;
  for (const Tensor& t : inputs) {
    had_grad.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.clear_grad();
  }
  {
    Tape tape;
    const Tensor loss = f(inputs);
    tape.backward(loss);
  }

  GradCheckReport report;
  Rng rng(options.seed);
  const double h = options.step;
  const double f0 = evaluate(f, inputs);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& t = inputs[k];
    const std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.numel(), 0.0);
    auto data = t.data();
    for (std::size_t i : sample_coords(t.numel(), options.max_coords_per_input, rng)) {
      const double original = data[i];
      auto at = [&](double offset) {
        data[i] = original + offset;
        const double v = evaluate(f, inputs);
        data[i] = original;
        return v;
      };
      const double fp = at(h);
      const double fm = at(-h);
      const double fp_half = at(0.5 * h);
      const double fm_half = at(-0.5 * h);

      const double numeric = (fp - fm) / (2.0 * h);
      const double numeric_half = (fp_half - fm_half) / h;
      // One-sided slope gaps: a smooth function halves the gap when h halves,
      // a kink at the point keeps it.
      const double gap = (fp - f0) / h - (f0 - fm) / h;
      const double gap_half = (fp_half - f0) / (0.5 * h) - (f0 - fm_half) / (0.5 * h);
      const double scale = std::max({std::abs(numeric), std::abs(numeric_half), 1e-3});
      const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() *
                              std::max(std::abs(f0), 1.0) / h;
      const double tol = 1e-6 * scale + roundoff;
      const bool kink_nearby = std::abs(numeric - numeric_half) > tol;
      const bool kink_at_point =
          std::abs(gap) > tol && std::abs(gap_half) > 0.75 * std::abs(gap);
      if (kink_nearby || kink_at_point) {
        ++report.excluded;
        continue;
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      report.max_relative_error =
          std::max(report.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++report.checked;
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    inputs[k].set_requires_grad(had_grad[k]);
  }
  return report;
}

}  // namespace dcnet
