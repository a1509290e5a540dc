#include "dcnet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dcnet {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  impl_->data.assign(element_count(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  validate_shape(shape);
  if (values.size() != element_count(shape)) {
    throw ShapeError("tensor of shape " + to_string(shape) + " needs " +
                     std::to_string(element_count(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_mut() const {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

void Tensor::zero_grad() const {
  std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() const {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) const { impl_->requires_grad = value; }

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + to_string(impl_->shape));
  }
  return impl_->data[0];
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data, false); }

// Tape ----------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() {
  if (g_active_tape == this) g_active_tape = previous_;
}

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::record(std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss");
  }
  std::size_t end = nodes_.size();
  while (end > 0 && !nodes_[end - 1].output.same_storage(loss)) --end;
  if (end == 0) throw std::logic_error("backward(): loss was not produced on this tape");

  for (std::size_t i = 0; i < end; ++i) nodes_[i].output.clear_grad();
  loss.grad_mut()[0] = 1.0;
  for (std::size_t i = end; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.output.has_grad()) node.backward();
  }
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw std::logic_error("backward(): no active tape");
  tape->backward(loss);
}

}  // namespace dcnet
