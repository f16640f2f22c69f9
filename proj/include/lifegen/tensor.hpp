#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lifegen/errors.hpp"

namespace lifegen {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class Tape;

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  Tape* tape = nullptr;  // tape this tensor was recorded on, if any
};
}  // namespace detail

// Dense row-major float tensor. A Tensor is a cheap handle: copies share the
// underlying storage, which is what the tape's backward closures rely on.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

  static Tensor zeros(Shape shape) {
    Tensor t;
    check_shape(shape);
    t.impl_->data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
    t.impl_->shape = std::move(shape);
    return t;
  }

  static Tensor full(Shape shape, float value) {
    Tensor t = zeros(std::move(shape));
    for (auto& v : t.impl_->data) v = value;
    return t;
  }

  static Tensor scalar(float value) { return full({1}, value); }

  static Tensor of(Shape shape, std::vector<float> values) {
    check_shape(shape);
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
      throw ShapeMismatch("value count " + std::to_string(values.size()) +
                          " does not fill shape " + shape_str(shape));
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    return t;
  }

  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const {
    return static_cast<std::int64_t>(impl_->data.size());
  }

  std::vector<float>& data() { return impl_->data; }
  const std::vector<float>& data() const { return impl_->data; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::vector<float>& grad() {
    ensure_grad();
    return impl_->grad;
  }
  const std::vector<float>& grad() const {
    if (impl_->grad.empty()) throw MissingGradient("tensor has no gradient");
    return impl_->grad;
  }
  void ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
  }
  void zero_grad() {
    if (!impl_->grad.empty())
      std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
  }
  void drop_grad() { impl_->grad.clear(); }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  float item() const {
    if (numel() != 1)
      throw NotScalar("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
  }

  Tape* tape() const { return impl_->tape; }
  void set_tape(Tape* t) { impl_->tape = t; }

  // Identity of the underlying storage, for aliasing checks in tests.
  const void* storage_id() const { return impl_.get(); }

 private:
  static void check_shape(const Shape& shape) {
    for (int d : shape)
      if (d <= 0)
        throw ShapeMismatch("non-positive dimension in " + shape_str(shape));
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

inline void check_finite(const Tensor& t, const char* op) {
  for (float v : t.data())
    if (!std::isfinite(v))
      throw NonFinite(std::string(op) + " produced a non-finite value");
}

// Records the backward rules of one forward pass. Ops append closures while a
// tape is active; backward() replays them in reverse. One backward per tape.
class Tape {
 public:
  Tape() { stack().push_back(this); }
  ~Tape() { stack().pop_back(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() {
    auto& s = stack();
    return s.empty() ? nullptr : s.back();
  }

  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  std::size_t size() const { return ops_.size(); }

  void backward(const Tensor& loss) {
    if (loss.numel() != 1)
      throw NotScalar("backward requires a scalar loss, got " +
                      shape_str(loss.shape()));
    if (loss.tape() != this)
      throw StaleTape("loss was not produced on this tape");
    if (consumed_)
      throw StaleTape("backward already ran on this tape; run a new forward");
    consumed_ = true;
    const_cast<Tensor&>(loss).grad()[0] += 1.0f;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

 private:
  friend class NoGradGuard;
  static std::vector<Tape*>& stack() {
    thread_local std::vector<Tape*> s;
    return s;
  }

  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

// Suppresses recording within a scope (frozen-model forward passes).
class NoGradGuard {
 public:
  NoGradGuard() { Tape::stack().push_back(nullptr); }
  ~NoGradGuard() { Tape::stack().pop_back(); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Free-function form: dispatches to the tape that produced the loss.
inline void backward(const Tensor& loss) {
  if (loss.tape() == nullptr)
    throw StaleTape("loss was not recorded on any tape");
  loss.tape()->backward(loss);
}

}  // namespace lifegen
