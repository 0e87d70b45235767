// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dense float64 tensors with a reverse-mode gradient tape.
//
// A Tensor is a cheap handle onto shared storage, so parameters keep their
// identity when passed around (the optimizer and the checkpoint writer rely on
// that). Operations record themselves on the thread's active Tape only when a
// TapeScope is open and at least one input participates in differentiation.
// Without an open tape every op is a plain value computation.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eciwb {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {
struct TensorImpl;
}

class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  bool defined() const { return impl_ != nullptr; }

  std::span<const double> data() const;
  // Writable view of the storage. Mutating a tensor that is an input of a
  // recorded op invalidates that op's backward rule; only optimizers and
  // finite-difference probes write here, and never while a tape is open.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);

  // Gradient accumulated by backward(); empty span when none was allocated.
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  // Allocates when needed.
  void zero_grad();
  void clear_grad();

  // Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const;
  // Same storage identity.
  bool same(const Tensor& other) const { return impl_ == other.impl_; }

  // Internal: ops and the tape work on the implementation directly.
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Called during backward with the gradient flowing into an op's output.
using BackwardFn = std::function<void(std::span<const double> grad_output)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Reverse-topological accumulation from a scalar loss recorded on this tape.
  // Closes the tape: a second call throws TapeError.
  void backward(const Tensor& loss);

  bool closed() const { return closed_; }
  std::size_t size() const { return records_.size(); }

  // Internal, used by record_op().
  void push(std::string_view op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

 private:
  struct Record {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Record> records_;
  bool closed_ = false;
};

// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

Tape* active_tape();

// Runs backward on the tape that recorded `loss`.
void backward(const Tensor& loss);

// True when an op over these inputs would be recorded.
bool should_record(std::span<const Tensor> inputs);

// Registers `output` as produced from `inputs`. No-op when nothing needs a
// gradient. The rule receives d(loss)/d(output) and must push contributions
// into inputs through accumulate_grad().
void record_op(std::string_view op, std::vector<Tensor> inputs, const Tensor& output, BackwardFn fn);

// Adds `contribution` into the gradient buffer of `target` if it takes part
// in differentiation (allocating the buffer on first use).
void accumulate_grad(const Tensor& target, std::span<const double> contribution);

// Whether backward will deliver a gradient to this tensor.
bool tracks_grad(const Tensor& t);

}  // namespace eciwb

namespace eciwb {

// A parameter with its checkpoint name.
struct NamedTensor {
  std::string name;
  Tensor tensor;
};

}  // namespace eciwb
