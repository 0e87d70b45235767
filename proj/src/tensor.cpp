// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#include "eciwb/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "eciwb/error.hpp"
#include "eciwb/kernels.hpp"

namespace eciwb {

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  // Produced by a recorded op whose inputs need gradients.
  bool tracked = false;
  Tape* tape = nullptr;
};

}  // namespace detail

namespace {

thread_local Tape* g_active_tape = nullptr;

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<double> data) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

const detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw ValueError("use of an undefined tensor");
  return *impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  const std::size_t n = shape_numel(shape);
  return Tensor(make_impl(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  for (std::size_t d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                     " values, got " + std::to_string(values.size()));
  return Tensor(make_impl(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return Tensor(make_impl({}, {value})); }

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size())
    throw ValueError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }

std::span<double> Tensor::mutable_data() {
  checked(impl_);
  return impl_->data;
}

double Tensor::item() const {
  const auto& impl = checked(impl_);
  if (impl.data.size() != 1)
    throw ShapeError("item() needs a single-element tensor, got " + shape_str(impl.shape));
  return impl.data[0];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  checked(impl_);
  if (impl_->tracked) throw TapeError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = value;
  if (!value) impl_->grad.clear();
  return *this;
}

bool Tensor::has_grad() const { return !checked(impl_).grad.empty(); }

std::span<const double> Tensor::grad() const { return checked(impl_).grad; }

std::span<double> Tensor::mutable_grad() {
  checked(impl_);
  return impl_->grad;
}

void Tensor::zero_grad() {
  checked(impl_);
  impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::clear_grad() {
  checked(impl_);
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::clone() const {
  const auto& impl = checked(impl_);
  return Tensor(make_impl(impl.shape, impl.data));
}

// ---------------------------------------------------------------------------

Tape::~Tape() {
  for (auto& r : records_) {
    r.output.impl()->tape = nullptr;
    r.output.impl()->tracked = false;
  }
}

void Tape::push(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
                BackwardFn fn) {
  if (closed_) throw TapeError("cannot record '" + std::string(op) + "' on a closed tape");
  output.impl()->tracked = true;
  output.impl()->tape = this;
  records_.push_back(Record{op, std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (closed_)
    throw TapeError("backward already ran on this tape; record a new forward pass first");
  if (!loss.defined() || loss.impl()->tape != this)
    throw TapeError("loss was not recorded on this tape");
  if (loss.numel() != 1)
    throw TapeError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  closed_ = true;

  loss.impl()->grad.assign(1, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    auto& out = *it->output.impl();
    if (!out.grad.empty()) it->backward(out.grad);
    // Intermediate gradients are not observable after backward.
    out.grad.clear();
    out.grad.shrink_to_fit();
  }
  for (auto& r : records_) {
    r.output.impl()->tape = nullptr;
    r.output.impl()->tracked = false;
  }
  records_.clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.impl()->tape == nullptr)
    throw TapeError("backward needs a loss recorded on an open tape");
  loss.impl()->tape->backward(loss);
}

bool tracks_grad(const Tensor& t) {
  return t.defined() && (t.impl()->requires_grad || t.impl()->tracked);
}

bool should_record(std::span<const Tensor> inputs) {
  if (g_active_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return tracks_grad(t); });
}

void record_op(std::string_view op, std::vector<Tensor> inputs, const Tensor& output,
               BackwardFn fn) {
  if (!should_record(inputs)) return;
  g_active_tape->push(op, std::move(inputs), output, std::move(fn));
}

void accumulate_grad(const Tensor& target, std::span<const double> contribution) {
  if (!tracks_grad(target)) return;
  auto& impl = *target.impl();
  if (contribution.size() != impl.data.size())
    throw ShapeError("gradient size " + std::to_string(contribution.size()) +
                     " does not match tensor " + shape_str(impl.shape));
  if (impl.grad.empty()) {
    impl.grad.assign(contribution.begin(), contribution.end());
    return;
  }
  kernels::active().add(impl.grad.size(), impl.grad.data(), contribution.data(), impl.grad.data());
}

}  // namespace eciwb
