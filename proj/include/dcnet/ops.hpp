#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dcnet/random.hpp"
#include "dcnet/tensor.hpp"

// Differentiable tensor operations. Every op checks shapes strictly: there is
// no implicit broadcasting, only the explicit `scale` by a scalar and `expand`
// along a size-1 axis.
namespace dcnet::ops {

enum class Mode { train, eval };

// Convolution / pooling ---------------------------------------------------

/// x [N,C,H,W], weight [O,C,kh,kw], bias [O] or undefined -> [N,O,H',W'].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Windowed max. Gradient goes to the first (row-major) maximal element of each window.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Average over adaptive bins: bin i spans [floor(i*H/out), ceil((i+1)*H/out)).
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);

// Batch normalization -----------------------------------------------------

/// Running statistics of one batchnorm layer. `ready` is false until a
/// train-mode pass has updated the statistics or they were explicitly set.
struct RunningStats {
  Tensor mean;
  Tensor var;
  bool ready = false;

  /// mean 0, var 1, usable in eval mode immediately.
  static RunningStats identity(std::size_t channels);
  /// Same storage values as identity() but eval mode refuses it until a train pass.
  static RunningStats uninitialized(std::size_t channels);
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

/// Train mode normalizes with biased batch statistics over (N,H,W) and folds
/// them into `stats`; eval mode applies the stored statistics.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                   Mode mode, double momentum = kBatchNormMomentum, double eps = kBatchNormEps);

// Dense -------------------------------------------------------------------

/// x [N,D], weight [D,K], bias [K] or undefined -> [N,K].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Elementwise -------------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

/// Inverted dropout; identity in eval mode or when p == 0.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

// Shape / reductions ------------------------------------------------------

Tensor sum_all(const Tensor& a);
/// Mean along `axis`, which is removed from the shape.
Tensor mean_over(const Tensor& a, std::size_t axis);
/// Collapse axes [from_axis, rank) into one.
Tensor flatten(const Tensor& a, std::size_t from_axis);
Tensor reshape(const Tensor& a, Shape shape);
/// Slice [start, start+length) of `axis`.
Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Repeat a size-1 `axis` n times.
Tensor expand(const Tensor& a, std::size_t axis, std::size_t n);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);

// Loss --------------------------------------------------------------------

/// Sum over all rows and columns of the binary cross entropy between
/// sigmoid(scores) and one-hot targets, in the overflow-free form
/// max(s,0) - s*y + log(1 + exp(-|s|)).
Tensor bce_with_logits(const Tensor& scores, const Tensor& targets);

}  // namespace dcnet::ops
