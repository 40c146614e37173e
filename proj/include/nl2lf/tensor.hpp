#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nl2lf/random.hpp"

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Everything is templated on the scalar type. Training runs in float; the
// double instantiation exists for finite-difference gradient checks.
namespace nl2lf::tensor {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool has_grad() const { return !grad_.empty(); }
  // Allocates a zero gradient on first use.
  std::span<T> grad();
  std::span<const T> grad() const { return grad_; }
  void zero_grad() { grad_.clear(); }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
  bool requires_grad_ = false;
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(Shape shape, std::vector<T> data, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<T>>(std::move(shape), std::move(data));
  t->set_requires_grad(requires_grad);
  return t;
}

// Ordered record of differentiable operations. Entries are appended as ops
// run, so the record is already in topological order; backward() walks it in
// reverse exactly once. A tape with recording disabled builds no graph.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }

  // When set, every op output is scanned for NaN/Inf and a NumericalError names
  // the offending op.
  void set_check_finite(bool flag) { check_finite_ = flag; }
  bool check_finite() const { return check_finite_; }

  void record(const TensorPtr<T>& output, std::function<void()> backward);
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs the chain rule. The loss must be a
  // scalar; a second call without reset() throws.
  void backward(const TensorPtr<T>& loss);
  void reset();

 private:
  struct Entry {
    TensorPtr<T> output;
    std::function<void()> backward;
  };
  std::vector<Entry> entries_;
  bool recording_ = true;
  bool check_finite_ = false;
  bool consumed_ = false;
};

// Elementwise ops broadcast numpy-style (right-aligned; equal or 1).
template <typename T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);
template <typename T>
TensorPtr<T> scale(Tape<T>& tape, const TensorPtr<T>& a, T factor);
template <typename T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& a);
// tanh approximation of GELU.
template <typename T>
TensorPtr<T> gelu(Tape<T>& tape, const TensorPtr<T>& a);
template <typename T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& a);

template <typename T>
TensorPtr<T> reshape(Tape<T>& tape, const TensorPtr<T>& a, Shape shape);
template <typename T>
TensorPtr<T> permute(Tape<T>& tape, const TensorPtr<T>& a, const std::vector<int>& axes);
// Swaps the last two axes.
template <typename T>
TensorPtr<T> transpose(Tape<T>& tape, const TensorPtr<T>& a);

// [..., m, k] x [..., k, n] -> [..., m, n]; leading axes broadcast.
template <typename T>
TensorPtr<T> matmul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b);

template <typename T>
TensorPtr<T> softmax(Tape<T>& tape, const TensorPtr<T>& x, int axis);

// y = gain * x / sqrt(mean(x^2) + eps) over the last axis.
template <typename T>
TensorPtr<T> rms_norm(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gain, T eps);

// Gathers rows of table [V, d] -> [ids.size(), d].
template <typename T>
TensorPtr<T> embedding(Tape<T>& tape, const TensorPtr<T>& table, std::span<const std::int32_t> ids);

// Mean over rows whose target != ignore_id of -log softmax(logits)[target].
// logits is [..., V] with one row per target. Optional per-row weights scale
// each row's term (the divisor stays the count of kept rows).
template <typename T>
TensorPtr<T> cross_entropy(Tape<T>& tape, const TensorPtr<T>& logits,
                           std::span<const std::int32_t> targets, std::int32_t ignore_id,
                           std::span<const T> weights = {});

// Inverted dropout; rate 0 returns the input unchanged.
template <typename T>
TensorPtr<T> dropout(Tape<T>& tape, const TensorPtr<T>& x, double rate, Rng& rng);

// Row-wise log-softmax without graph recording (inference helper).
template <typename T>
std::vector<T> log_softmax_rows(std::span<const T> logits, std::size_t cols);

// Throws NumericalError if any element is NaN/Inf.
template <typename T>
void require_finite(const Tensor<T>& t, const std::string& what);

}  // namespace nl2lf::tensor
