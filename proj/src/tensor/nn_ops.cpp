#include <algorithm>
#include <cmath>
#include <limits>

#include "dcnet/ops.hpp"
#include "op_support.hpp"

namespace dcnet::ops {

using detail::ConstMapRM;
using detail::ensure_finite;
using detail::MapRM;
using detail::MatrixRM;
using detail::require_rank;
using detail::tracking;
using detail::wants;

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t o, kh, kw;      // filters
  std::size_t stride, pad;
  std::size_t oh, ow;         // output

  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_plane() const { return oh * ow; }
};

// Keep im2col buffers around 16 MiB.
constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

std::size_t images_per_chunk(const ConvGeometry& g) {
  const std::size_t per_image = g.patch() * g.out_plane();
  return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_image, 1), 1, g.n);
}

// Output columns [lo, hi) whose input column xo*stride + j - pad lies inside [0, w).
struct Span {
  std::size_t lo, hi;
};

Span valid_outputs(std::size_t j, std::size_t stride, std::size_t pad, std::size_t w,
                   std::size_t ow) {
  const std::size_t lo = j >= pad ? 0 : (pad - j + stride - 1) / stride;
  if (w + pad <= j) return {0, 0};
  const std::size_t hi = std::min(ow, (w - 1 + pad - j) / stride + 1);
  return {std::min(lo, hi), hi};
}

// col[(c*kh+i)*kw+j][local*oh*ow + y*ow + x] = padded input value.
void im2col(const double* x, const ConvGeometry& g, std::size_t first, std::size_t count,
            double* col) {
  const std::size_t width = count * g.out_plane();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      const Span ys = valid_outputs(i, g.stride, g.pad, g.h, g.oh);
      for (std::size_t j = 0; j < g.kw; ++j) {
        const Span xs = valid_outputs(j, g.stride, g.pad, g.w, g.ow);
        double* row = col + ((ch * g.kh + i) * g.kw + j) * width;
        for (std::size_t local = 0; local < count; ++local) {
          const double* plane = x + ((first + local) * g.c + ch) * g.h * g.w;
          double* dst = row + local * g.out_plane();
          std::fill(dst, dst + ys.lo * g.ow, 0.0);
          for (std::size_t y = ys.lo; y < ys.hi; ++y) {
            double* out = dst + y * g.ow;
            const double* in = plane + (y * g.stride + i - g.pad) * g.w;
            std::fill(out, out + xs.lo, 0.0);
            for (std::size_t xo = xs.lo; xo < xs.hi; ++xo) out[xo] = in[xo * g.stride + j - g.pad];
            std::fill(out + xs.hi, out + g.ow, 0.0);
          }
          std::fill(dst + ys.hi * g.ow, dst + g.out_plane(), 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, std::size_t first, std::size_t count,
                double* dx) {
  const std::size_t width = count * g.out_plane();
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      const Span ys = valid_outputs(i, g.stride, g.pad, g.h, g.oh);
      for (std::size_t j = 0; j < g.kw; ++j) {
        const Span xs = valid_outputs(j, g.stride, g.pad, g.w, g.ow);
        const double* row = col + ((ch * g.kh + i) * g.kw + j) * width;
        for (std::size_t local = 0; local < count; ++local) {
          double* plane = dx + ((first + local) * g.c + ch) * g.h * g.w;
          const double* src = row + local * g.out_plane();
          for (std::size_t y = ys.lo; y < ys.hi; ++y) {
            const double* in = src + y * g.ow;
            double* out = plane + (y * g.stride + i - g.pad) * g.w;
            for (std::size_t xo = xs.lo; xo < xs.hi; ++xo) out[xo * g.stride + j - g.pad] += in[xo];
          }
        }
      }
    }
  }
}

std::size_t pooled_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                          std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 weight.dim(3), stride, padding, 0, 0};
  if (weight.dim(1) != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels but weight " +
                     to_string(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (g.kh > g.h + 2 * padding || g.kw > g.w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                     " larger than padded input " + to_string(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{g.o}) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(g.o) + "], got " +
                     to_string(bias.shape()));
  }
  g.oh = pooled_extent(g.h, g.kh, stride, padding);
  g.ow = pooled_extent(g.w, g.kw, stride, padding);

  Tensor out(Shape{g.n, g.o, g.oh, g.ow});
  const std::size_t chunk = images_per_chunk(g);
  std::vector<double> col(g.patch() * chunk * g.out_plane());
  MatrixRM prod;
  ConstMapRM w(weight.data().data(), g.o, g.patch());
  auto od = out.data();
  for (std::size_t first = 0; first < g.n; first += chunk) {
    const std::size_t count = std::min(chunk, g.n - first);
    const std::size_t width = count * g.out_plane();
    im2col(x.data().data(), g, first, count, col.data());
    prod.noalias() = w * ConstMapRM(col.data(), g.patch(), width);
    for (std::size_t local = 0; local < count; ++local) {
      for (std::size_t oc = 0; oc < g.o; ++oc) {
        const double b = bias.defined() ? bias.data()[oc] : 0.0;
        double* dst = od.data() + ((first + local) * g.o + oc) * g.out_plane();
        const double* src = prod.data() + oc * width + local * g.out_plane();
        for (std::size_t p = 0; p < g.out_plane(); ++p) dst[p] = src[p] + b;
      }
    }
  }
  ensure_finite(od, "conv2d");

  if (tracking({&x, &weight, &bias})) {
    Tape::active()->record({x, weight, bias}, out, [x, weight, bias, out, g, chunk] {
      auto go = out.grad();
      std::vector<double> col(g.patch() * chunk * g.out_plane());
      MatrixRM dout;
      MatrixRM dcol;
      ConstMapRM w(weight.data().data(), g.o, g.patch());
      for (std::size_t first = 0; first < g.n; first += chunk) {
        const std::size_t count = std::min(chunk, g.n - first);
        const std::size_t width = count * g.out_plane();
        dout.resize(static_cast<Eigen::Index>(g.o), static_cast<Eigen::Index>(width));
        for (std::size_t local = 0; local < count; ++local)
          for (std::size_t oc = 0; oc < g.o; ++oc)
            std::copy_n(go.data() + ((first + local) * g.o + oc) * g.out_plane(), g.out_plane(),
                        dout.data() + oc * width + local * g.out_plane());
        if (wants(bias)) {
          auto gb = bias.grad_mut();
          for (std::size_t oc = 0; oc < g.o; ++oc) gb[oc] += dout.row(oc).sum();
        }
        if (wants(weight)) {
          im2col(x.data().data(), g, first, count, col.data());
          MapRM gw(weight.grad_mut().data(), g.o, g.patch());
          gw.noalias() += dout * ConstMapRM(col.data(), g.patch(), width).transpose();
        }
        if (wants(x)) {
          dcol.noalias() = w.transpose() * dout;
          col2im_add(dcol.data(), g, first, count, x.grad_mut().data());
        }
      }
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  require_rank(x, 4, "maxpool2d", "input");
  if (stride == 0 || kernel == 0) throw ShapeError("maxpool2d: kernel and stride must be >= 1");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (kernel > h + 2 * padding || kernel > w + 2 * padding) {
    throw ShapeError("maxpool2d: window " + std::to_string(kernel) +
                     " larger than padded input " + to_string(x.shape()));
  }
  if (2 * padding > kernel) {
    throw ShapeError("maxpool2d: padding must be at most half the window");
  }
  const std::size_t oh = pooled_extent(h, kernel, stride, padding);
  const std::size_t ow = pooled_extent(w, kernel, stride, padding);

  Tensor out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  auto xd = x.data();
  auto od = out.data();
  const auto ipad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xd.data() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        bool found = false;
        for (std::size_t i = 0; i < kernel; ++i) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride + i) - ipad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kernel; ++j) {
            const auto ix = static_cast<std::ptrdiff_t>(xo * stride + j) - ipad;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const auto at = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
            if (!found || src[at] > best) {
              best = src[at];
              best_at = at;
              found = true;
            }
          }
        }
        const std::size_t o = (plane * oh + y) * ow + xo;
        od[o] = best;
        argmax[o] = plane * h * w + best_at;
      }
    }
  }

  if (tracking({&x})) {
    Tape::active()->record({x}, out, [x, out, argmax = std::move(argmax)] {
      auto g = x.grad_mut();
      auto go = out.grad();
      for (std::size_t i = 0; i < go.size(); ++i) g[argmax[i]] += go[i];
    });
  }
  return out;
}

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank(x, 4, "adaptive_avg_pool2d", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (out_h == 0 || out_w == 0 || out_h > h || out_w > w) {
    throw ShapeError("adaptive_avg_pool2d: cannot pool " + to_string(x.shape()) + " to " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  struct Bin {
    std::size_t begin, end;
  };
  auto bins = [](std::size_t in, std::size_t out) {
    std::vector<Bin> b(out);
    for (std::size_t i = 0; i < out; ++i) b[i] = {i * in / out, ((i + 1) * in + out - 1) / out};
    return b;
  };
  const std::vector<Bin> rows = bins(h, out_h), cols = bins(w, out_w);

  Tensor out(Shape{n, c, out_h, out_w});
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = xd.data() + plane * h * w;
    for (std::size_t by = 0; by < out_h; ++by) {
      for (std::size_t bx = 0; bx < out_w; ++bx) {
        double total = 0.0;
        for (std::size_t y = rows[by].begin; y < rows[by].end; ++y)
          for (std::size_t xi = cols[bx].begin; xi < cols[bx].end; ++xi) total += src[y * w + xi];
        const double area = static_cast<double>((rows[by].end - rows[by].begin) *
                                                (cols[bx].end - cols[bx].begin));
        od[(plane * out_h + by) * out_w + bx] = total / area;
      }
    }
  }

  if (tracking({&x})) {
    Tape::active()->record({x}, out, [x, out, rows, cols, n, c, h, w, out_h, out_w] {
      auto g = x.grad_mut();
      auto go = out.grad();
      for (std::size_t plane = 0; plane < n * c; ++plane) {
        for (std::size_t by = 0; by < out_h; ++by) {
          for (std::size_t bx = 0; bx < out_w; ++bx) {
            const double area = static_cast<double>((rows[by].end - rows[by].begin) *
                                                    (cols[bx].end - cols[bx].begin));
            const double share = go[(plane * out_h + by) * out_w + bx] / area;
            for (std::size_t y = rows[by].begin; y < rows[by].end; ++y)
              for (std::size_t xi = cols[bx].begin; xi < cols[bx].end; ++xi)
                g[plane * h * w + y * w + xi] += share;
          }
        }
      }
    });
  }
  return out;
}

RunningStats RunningStats::identity(std::size_t channels) {
  return RunningStats{Tensor::filled(Shape{channels}, 0.0), Tensor::filled(Shape{channels}, 1.0),
                      true};
}

RunningStats RunningStats::uninitialized(std::size_t channels) {
  RunningStats stats = identity(channels);
  stats.ready = false;
  return stats;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                   Mode mode, double momentum, double eps) {
  require_rank(x, 4, "batchnorm2d", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  const Shape per_channel{c};
  if (gamma.shape() != per_channel || beta.shape() != per_channel ||
      stats.mean.shape() != per_channel || stats.var.shape() != per_channel) {
    throw ShapeError("batchnorm2d: per-channel tensors must have shape [" + std::to_string(c) +
                     "] for input " + to_string(x.shape()));
  }
  if (!(eps > 0.0)) throw std::invalid_argument("batchnorm2d: eps must be positive");

  const std::size_t count = n * plane;
  auto xd = x.data();
  auto gd = gamma.data(), bd = beta.data();
  Tensor out(x.shape());
  auto od = out.data();

  if (mode == Mode::eval) {
    if (!stats.ready) {
      throw std::logic_error(
          "batchnorm2d: eval mode needs running statistics from a train pass or explicit "
          "initialization");
    }
    auto rm = stats.mean.data(), rv = stats.var.data();
    std::vector<double> mul(c), add(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      mul[ch] = gd[ch] / std::sqrt(rv[ch] + eps);
      add[ch] = bd[ch] - rm[ch] * mul[ch];
    }
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (s * c + ch) * plane;
        for (std::size_t p = 0; p < plane; ++p) od[base + p] = xd[base + p] * mul[ch] + add[ch];
      }
    ensure_finite(od, "batchnorm2d");
    if (tracking({&x, &gamma, &beta})) {
      Tape::active()->record(
          {x, gamma, beta}, out, [x, gamma, beta, out, mul, rv = stats.var.clone(),
                                  rm = stats.mean.clone(), n, c, plane, eps] {
            auto go = out.grad();
            auto xd = x.data();
            std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
            for (std::size_t s = 0; s < n; ++s)
              for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t base = (s * c + ch) * plane;
                const double inv_std = 1.0 / std::sqrt(rv.data()[ch] + eps);
                for (std::size_t p = 0; p < plane; ++p) {
                  dbeta[ch] += go[base + p];
                  dgamma[ch] += go[base + p] * (xd[base + p] - rm.data()[ch]) * inv_std;
                }
              }
            if (wants(x)) {
              auto gx = x.grad_mut();
              for (std::size_t s = 0; s < n; ++s)
                for (std::size_t ch = 0; ch < c; ++ch) {
                  const std::size_t base = (s * c + ch) * plane;
                  for (std::size_t p = 0; p < plane; ++p) gx[base + p] += go[base + p] * mul[ch];
                }
            }
            if (wants(gamma))
              for (std::size_t ch = 0; ch < c; ++ch) gamma.grad_mut()[ch] += dgamma[ch];
            if (wants(beta))
              for (std::size_t ch = 0; ch < c; ++ch) beta.grad_mut()[ch] += dbeta[ch];
          });
    }
    return out;
  }

  if (count < 2) {
    throw std::invalid_argument("batchnorm2d: train mode needs at least 2 values per channel, got " +
                                to_string(x.shape()));
  }
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) mean[ch] += xd[base + p];
    }
  for (double& m : mean) m /= static_cast<double>(count);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = xd[base + p] - mean[ch];
        var[ch] += d * d;
      }
    }
  for (double& v : var) v /= static_cast<double>(count);

  std::vector<double> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = 1.0 / std::sqrt(var[ch] + eps);
  Tensor xhat(x.shape());
  auto hd = xhat.data();
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t base = (s * c + ch) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        hd[base + p] = (xd[base + p] - mean[ch]) * inv_std[ch];
        od[base + p] = hd[base + p] * gd[ch] + bd[ch];
      }
    }
  ensure_finite(od, "batchnorm2d");

  auto rm = stats.mean.data(), rv = stats.var.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean[ch];
    rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var[ch];
  }
  stats.ready = true;

  if (tracking({&x, &gamma, &beta})) {
    Tape::active()->record(
        {x, gamma, beta}, out,
        [x, gamma, beta, out, xhat, inv_std = std::move(inv_std), n, c, plane, count] {
          auto go = out.grad();
          auto hd = xhat.data();
          auto gd = gamma.data();
          std::vector<double> dgamma(c, 0.0), dbeta(c, 0.0);
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t base = (s * c + ch) * plane;
              for (std::size_t p = 0; p < plane; ++p) {
                dbeta[ch] += go[base + p];
                dgamma[ch] += go[base + p] * hd[base + p];
              }
            }
          if (wants(x)) {
            // dx = gamma*inv_std/M * (M*dy - sum(dy) - xhat*sum(dy*xhat))
            auto gx = x.grad_mut();
            const double m = static_cast<double>(count);
            for (std::size_t s = 0; s < n; ++s)
              for (std::size_t ch = 0; ch < c; ++ch) {
                const std::size_t base = (s * c + ch) * plane;
                const double k = gd[ch] * inv_std[ch] / m;
                for (std::size_t p = 0; p < plane; ++p) {
                  gx[base + p] += k * (m * go[base + p] - dbeta[ch] - hd[base + p] * dgamma[ch]);
                }
              }
          }
          if (wants(gamma))
            for (std::size_t ch = 0; ch < c; ++ch) gamma.grad_mut()[ch] += dgamma[ch];
          if (wants(beta))
            for (std::size_t ch = 0; ch < c; ++ch) beta.grad_mut()[ch] += dbeta[ch];
        });
  }
  return out;
}

}  // namespace dcnet::ops
