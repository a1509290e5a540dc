#pragma once

#include <cmath>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "dcnet/tensor.hpp"

namespace dcnet::ops::detail {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

/// True when a tape is active and any defined input requires a gradient.
inline bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

inline bool wants(const Tensor& t) { return t.defined() && t.requires_grad(); }

inline void ensure_finite(std::span<const double> values, std::string_view op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(op) + ": non-finite value in output");
    }
  }
}

inline void require_rank(const Tensor& t, std::size_t rank, std::string_view op,
                         std::string_view what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + std::string(what) + " must have rank " +
                     std::to_string(rank) + ", got " + to_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

}  // namespace dcnet::ops::detail
