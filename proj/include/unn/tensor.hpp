#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "unn/errors.hpp"

namespace unn {

// Dense N-dimensional tensor with shared storage. Activations use the
// N x C x D x H x W layout, conv kernels out_ch x in_ch x kD x kH x kW, all
// row-major. T is float for training/inference and double for the shadow
// mode used by gradient and adjoint tests.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<std::int64_t> shape, bool requires_grad = false)
      : p_(std::make_shared<Payload>()) {
    std::int64_t n = 1;
    for (auto e : shape) {
      if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + std::to_string(e));
      n *= e;
    }
    p_->shape = std::move(shape);
    p_->value.assign(static_cast<std::size_t>(n), T(0));
    if (requires_grad) set_requires_grad(true);
  }

  static TensorT zeros(std::vector<std::int64_t> shape) { return TensorT(std::move(shape)); }

  static TensorT full(std::vector<std::int64_t> shape, T v) {
    TensorT t(std::move(shape));
    for (auto& x : t.p_->value) x = v;
    return t;
  }

  static TensorT from_vector(std::vector<std::int64_t> shape, std::vector<T> data) {
    TensorT t;
    t.p_ = std::make_shared<Payload>();
    std::int64_t n = 1;
    for (auto e : shape) {
      if (e < 1) throw ShapeError("tensor extent must be >= 1");
      n *= e;
    }
    if (static_cast<std::size_t>(n) != data.size())
      throw ShapeError("data size " + std::to_string(data.size()) +
                       " does not match shape product " + std::to_string(n));
    t.p_->shape = std::move(shape);
    t.p_->value = std::move(data);
    return t;
  }

  static TensorT scalar(T v) { return full({1}, v); }

  bool defined() const { return p_ != nullptr; }

  const std::vector<std::int64_t>& shape() const { return p_->shape; }

  std::int64_t extent(std::size_t axis) const { return p_->shape.at(axis); }

  std::size_t rank() const { return p_->shape.size(); }

  std::int64_t numel() const { return static_cast<std::int64_t>(p_->value.size()); }

  std::span<T> data() { return {p_->value.data(), p_->value.size()}; }
  std::span<const T> data() const { return {p_->value.data(), p_->value.size()}; }

  T* raw() { return p_->value.data(); }
  const T* raw() const { return p_->value.data(); }

  bool requires_grad() const { return p_ && p_->requires_grad; }

  void set_requires_grad(bool on) {
    p_->requires_grad = on;
    if (on && p_->grad.size() != p_->value.size())
      p_->grad.assign(p_->value.size(), T(0));
    if (!on) p_->grad.clear();
  }

  std::span<T> grad() {
    require_grad_buffer();
    return {p_->grad.data(), p_->grad.size()};
  }
  std::span<const T> grad() const {
    require_grad_buffer();
    return {p_->grad.data(), p_->grad.size()};
  }

  T* grad_raw() {
    require_grad_buffer();
    return p_->grad.data();
  }

  void zero_grad() {
    for (auto& g : p_->grad) g = T(0);
  }

  // Identity of the underlying storage; two handles to one payload compare equal.
  bool same_storage(const TensorT& other) const { return p_ == other.p_; }

  // Deep copy, detached from any tape.
  TensorT clone() const {
    TensorT t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = p_->shape;
    t.p_->value = p_->value;
    return t;
  }

 private:
  struct Payload {
    std::vector<std::int64_t> shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  void require_grad_buffer() const {
    if (!p_ || !p_->requires_grad)
      throw UsageError("tensor has no gradient buffer (requires_grad is off)");
  }

  std::shared_ptr<Payload> p_;
};

// Reverse-mode tape. Ops append their backward closures during the forward
// pass; close order is a valid topological order, so backward() just replays
// them in reverse. One tape == one forward/backward cycle; call clear() to
// reuse. A tape is single-threaded; independent tapes may live on separate
// threads.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  std::size_t size() const { return ops_.size(); }

  void backward(TensorT<T> loss) {
    if (consumed_)
      throw UsageError("backward() called twice on the same tape; clear() it first");
    if (loss.numel() != 1)
      throw UsageError("backward() needs a scalar loss, got " +
                       std::to_string(loss.numel()) + " elements");
    if (!loss.requires_grad())
      throw UsageError("loss does not depend on any tensor with requires_grad");
    consumed_ = true;
    loss.grad()[0] = T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void clear() {
    ops_.clear();
    consumed_ = false;
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool consumed_ = false;
};

using TensorF = TensorT<float>;
using TensorD = TensorT<double>;

inline std::string shape_to_string(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

}  // namespace unn
