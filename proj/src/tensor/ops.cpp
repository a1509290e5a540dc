#include <algorithm>
#include <cmath>

#include "dcnet/ops.hpp"
#include "op_support.hpp"

namespace dcnet::ops {

using detail::ConstMapRM;
using detail::ensure_finite;
using detail::MapRM;
using detail::require_same_shape;
using detail::tracking;
using detail::wants;

namespace {

// Splits a shape around `axis` into (outer, mid, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, mid = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.mid = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const Tensor& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + to_string(a.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Reshape-style ops copy; outputs never alias their input's storage.
Tensor same_data_new_shape(const Tensor& a, Shape shape) {
  Tensor out(std::move(shape), std::vector<double>(a.data().begin(), a.data().end()));
  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out] {
      auto ga = a.grad_mut();
      auto go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  if (tracking({&x})) {
    Tape::active()->record({x}, out, [x, out] {
      auto gx = x.grad_mut();
      auto go = out.grad();
      auto xd = x.data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (xd[i] > 0.0) gx[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = stable_sigmoid(xd[i]);
  if (tracking({&x})) {
    Tape::active()->record({x}, out, [x, out] {
      auto gx = x.grad_mut();
      auto go = out.grad();
      auto od = out.data();
      for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * od[i] * (1.0 - od[i]);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data(), od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  ensure_finite(od, "add");
  if (tracking({&a, &b})) {
    Tape::active()->record({a, b}, out, [a, b, out] {
      auto go = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto g = t->grad_mut();
        for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data(), od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
  ensure_finite(od, "sub");
  if (tracking({&a, &b})) {
    Tape::active()->record({a, b}, out, [a, b, out] {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        for (std::size_t i = 0; i < go.size(); ++i) g[i] -= go[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto ad = a.data(), bd = b.data(), od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  ensure_finite(od, "mul");
  if (tracking({&a, &b})) {
    Tape::active()->record({a, b}, out, [a, b, out] {
      auto go = out.grad();
      if (a.requires_grad()) {
        auto g = a.grad_mut();
        auto bd = b.data();
        for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * bd[i];
      }
      if (b.requires_grad()) {
        auto g = b.grad_mut();
        auto ad = a.data();
        for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * ad[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  auto ad = a.data(), od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * s;
  ensure_finite(od, "scale");
  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out, s] {
      auto g = a.grad_mut();
      auto go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * s;
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (double& m : mask) m = uniform01(rng) < p ? 0.0 : keep_scale;

  Tensor out(x.shape());
  auto xd = x.data(), od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * mask[i];
  if (tracking({&x})) {
    Tape::active()->record({x}, out, [x, out, mask = std::move(mask)] {
      auto g = x.grad_mut();
      auto go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) g[i] += go[i] * mask[i];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  detail::require_rank(x, 2, "linear", "input");
  detail::require_rank(weight, 2, "linear", "weight");
  const std::size_t n = x.dim(0), d = x.dim(1), k = weight.dim(1);
  if (weight.dim(0) != d) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{k}) {
    throw ShapeError("linear: bias must have shape [" + std::to_string(k) + "], got " +
                     to_string(bias.shape()));
  }

  Tensor out(Shape{n, k});
  MapRM o(out.data().data(), n, k);
  o.noalias() = ConstMapRM(x.data().data(), n, d) * ConstMapRM(weight.data().data(), d, k);
  if (bias.defined()) {
    auto bd = bias.data();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) o(r, c) += bd[c];
  }
  ensure_finite(out.data(), "linear");

  if (tracking({&x, &weight, &bias})) {
    Tape::active()->record({x, weight, bias}, out, [x, weight, bias, out, n, d, k] {
      ConstMapRM go(out.grad().data(), n, k);
      if (wants(x)) {
        MapRM gx(x.grad_mut().data(), n, d);
        gx.noalias() += go * ConstMapRM(weight.data().data(), d, k).transpose();
      }
      if (wants(weight)) {
        MapRM gw(weight.grad_mut().data(), d, k);
        gw.noalias() += ConstMapRM(x.data().data(), n, d).transpose() * go;
      }
      if (wants(bias)) {
        auto gb = bias.grad_mut();
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < k; ++c) gb[c] += go(r, c);
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = Tensor::scalar(total);
  ensure_finite(out.data(), "sum_all");
  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out] {
      auto g = a.grad_mut();
      const double go = out.grad()[0];
      for (double& v : g) v += go;
    });
  }
  return out;
}

Tensor mean_over(const Tensor& a, std::size_t axis) {
  check_axis(a, axis, "mean_over");
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape.push_back(1);

  Tensor out(shape);
  auto ad = a.data(), od = out.data();
  const double inv = 1.0 / static_cast<double>(s.mid);
  const double count = static_cast<double>(s.mid);
  // Pairwise summation: exact for 2^k identical slices, and tighter error in general.
  std::vector<double> buf(s.mid * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(ad.data() + o * s.mid * s.inner, s.mid * s.inner, buf.data());
    for (std::size_t n = s.mid; n > 1; n = (n + 1) / 2) {
      for (std::size_t k = 0; k < n / 2; ++k)
        for (std::size_t i = 0; i < s.inner; ++i)
          buf[k * s.inner + i] = buf[2 * k * s.inner + i] + buf[(2 * k + 1) * s.inner + i];
      if (n % 2 == 1) std::copy_n(buf.data() + (n - 1) * s.inner, s.inner, buf.data() + n / 2 * s.inner);
    }
    for (std::size_t i = 0; i < s.inner; ++i) od[o * s.inner + i] = buf[i] / count;
  }

  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out, s, inv] {
      auto g = a.grad_mut();
      auto go = out.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t m = 0; m < s.mid; ++m)
          for (std::size_t i = 0; i < s.inner; ++i)
            g[(o * s.mid + m) * s.inner + i] += go[o * s.inner + i] * inv;
    });
  }
  return out;
}

Tensor flatten(const Tensor& a, std::size_t from_axis) {
  check_axis(a, from_axis, "flatten");
  Shape shape(a.shape().begin(), a.shape().begin() + static_cast<std::ptrdiff_t>(from_axis));
  std::size_t tail = 1;
  for (std::size_t i = from_axis; i < a.rank(); ++i) tail *= a.dim(i);
  shape.push_back(tail);
  return same_data_new_shape(a, std::move(shape));
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (element_count(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
  }
  return same_data_new_shape(a, std::move(shape));
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "narrow");
  if (length == 0 || start + length > a.dim(axis)) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") outside axis " + std::to_string(axis) +
                     " of " + to_string(a.shape()));
  }
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = length;
  Tensor out(shape);
  auto ad = a.data(), od = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(ad.data() + (o * s.mid + start) * s.inner, length * s.inner,
                od.data() + o * length * s.inner);
  }
  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out, s, start, length] {
      auto g = a.grad_mut();
      auto go = out.grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        double* dst = g.data() + (o * s.mid + start) * s.inner;
        const double* src = go.data() + o * length * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

Tensor expand(const Tensor& a, std::size_t axis, std::size_t n) {
  check_axis(a, axis, "expand");
  if (a.dim(axis) != 1) {
    throw ShapeError("expand: axis " + std::to_string(axis) + " of " + to_string(a.shape()) +
                     " must have size 1");
  }
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = n;
  Tensor out(shape);
  auto ad = a.data(), od = out.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t m = 0; m < n; ++m)
      std::copy_n(ad.data() + o * s.inner, s.inner, od.data() + (o * n + m) * s.inner);
  if (tracking({&a})) {
    Tape::active()->record({a}, out, [a, out, s, n] {
      auto g = a.grad_mut();
      auto go = out.grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t m = 0; m < n; ++m)
          for (std::size_t i = 0; i < s.inner; ++i)
            g[o * s.inner + i] += go[(o * n + m) * s.inner + i];
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  check_axis(parts[0], axis, "concat");
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw ShapeError("concat: incompatible shapes " + to_string(shape) + " and " +
                       to_string(p.shape()));
    }
    total += p.dim(axis);
  }
  shape[axis] = total;
  Tensor out(shape);
  const AxisSplit s = split_at(shape, axis);
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  std::size_t offset = 0;
  auto od = out.data();
  for (const Tensor& p : parts) {
    const std::size_t mid = p.dim(axis);
    auto pd = p.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(pd.data() + o * mid * s.inner, mid * s.inner,
                  od.data() + (o * total + offset) * s.inner);
    offset += mid;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || tracking({&p});
  if (any) {
    Tape::active()->record(inputs, out, [inputs, out, s, total, axis] {
      auto go = out.grad();
      std::size_t offset = 0;
      for (const Tensor& p : inputs) {
        const std::size_t mid = p.dim(axis);
        if (p.requires_grad()) {
          auto g = p.grad_mut();
          for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < mid * s.inner; ++i)
              g[o * mid * s.inner + i] += go[(o * total + offset) * s.inner + i];
        }
        offset += mid;
      }
    });
  }
  return out;
}

Tensor bce_with_logits(const Tensor& scores, const Tensor& targets) {
  detail::require_rank(scores, 2, "bce_with_logits", "scores");
  require_same_shape(scores, targets, "bce_with_logits");
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  auto sd = scores.data(), td = targets.data();
  for (std::size_t r = 0; r < n; ++r) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double y = td[r * k + c];
      if (y != 0.0 && y != 1.0) {
        throw std::invalid_argument("bce_with_logits: targets must be 0 or 1");
      }
      row_sum += y;
    }
    if (row_sum != 1.0) {
      throw std::invalid_argument("bce_with_logits: target row " + std::to_string(r) +
                                  " is not one-hot");
    }
  }

  double total = 0.0;
  for (std::size_t i = 0; i < sd.size(); ++i) {
    const double s = sd[i];
    total += std::max(s, 0.0) - s * td[i] + std::log1p(std::exp(-std::abs(s)));
  }
  Tensor out = Tensor::scalar(total);
  ensure_finite(out.data(), "bce_with_logits");

  if (tracking({&scores})) {
    Tape::active()->record({scores, targets}, out, [scores, targets, out] {
      auto g = scores.grad_mut();
      auto sd = scores.data(), td = targets.data();
      const double go = out.grad()[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += go * (stable_sigmoid(sd[i]) - td[i]);
    });
  }
  return out;
}

}  // namespace dcnet::ops
