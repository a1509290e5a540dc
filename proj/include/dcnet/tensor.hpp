#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dcnet {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes do not satisfy an op's contract.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces a non-finite value or diverges.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t element_count(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Copies are shallow: two Tensor handles may refer to the same storage, which
/// is how parameters are shared between a model's modules and its optimizer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data() const;
  /// Empty span when no gradient has been accumulated yet.
  std::span<double> grad() const;
  /// Allocates a zero gradient buffer on first use.
  std::span<double> grad_mut() const;
  bool has_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool value) const;

  double item() const;
  Tensor clone() const;

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations in execution order.
///
/// Constructing a Tape makes it the active tape of the calling thread until it
/// is destroyed; ops only record (and only mark outputs requires_grad) while a
/// tape is active. Tapes nest: the innermost one wins.
class Tape {
 public:
  struct Node {
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() noexcept;

  void record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

  /// Reverse sweep from `loss`. Intermediate gradients are reset first, leaf
  /// gradients (parameters) accumulate across calls until zeroed.
  void backward(const Tensor& loss);

  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  Tape* previous_ = nullptr;
};

/// Backward on the thread's active tape.
void backward(const Tensor& loss);

}  // namespace dcnet
