#pragma once
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// Every op treats its operands as matrices: rank-0 is 1x1, rank-1 of extent n
// is a 1xn row, rank-2 is itself. Higher ranks may be stored but not operated
// on. Binary elementwise ops broadcast along any extent equal to 1.
//
// An op is recorded only while a Tape is active on the calling thread (see
// TapeScope) and at least one operand requires a gradient. Without an active
// tape every op is a plain forward computation, which is what evaluation
// code relies on.
//

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace resad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until something flows into it
  bool requires_grad = false;

  std::vector<Real>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

}  // namespace detail

template <typename Real>
class BasicTensor;

// Ordered record of executed ops. backward() replays the record once, in
// reverse, and consumes it.
class Tape {
 public:
  using Node = std::function<void()>;

  void record(const void* output, Node backward);

  template <typename Real>
  void backward(const BasicTensor<Real>& loss);

  std::size_t size() const { return nodes_.size(); }
  // Node visits performed by the most recent backward().
  std::size_t last_visit_count() const { return visits_; }
  void clear();

 private:
  std::vector<Node> nodes_;
  std::vector<const void*> outputs_;
  std::size_t visits_ = 0;
};

Tape* active_tape();

// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;
  using Impl = detail::TensorImpl<Real>;

  BasicTensor();
  BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, Real value, bool requires_grad = false);
  static BasicTensor scalar(Real value, bool requires_grad = false);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Real> data() const { return impl_->data; }
  // Direct storage access for initializers and optimizers; never recorded.
  std::span<Real> mutable_data() { return impl_->data; }
  Real item() const;
  Real at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  // Zero-filled span when nothing has accumulated yet.
  std::span<const Real> grad() const;
  void zero_grad() { impl_->grad.clear(); }

  // Same values, no history, no gradient requirement (stop-gradient).
  BasicTensor detach() const;

  bool same_storage(const BasicTensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<Impl>& impl() const { return impl_; }
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  return BasicTensor<To>(t.shape(), std::move(out), false);
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <typename Real>
BasicTensor<Real> matmul(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b);
template <typename Real>
BasicTensor<Real> div(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

template <typename Real>
BasicTensor<Real> exp(const BasicTensor<Real>& x);
// Throws DomainError on any non-positive element.
template <typename Real>
BasicTensor<Real> log(const BasicTensor<Real>& x);
// Throws DomainError on any negative element. The gradient at 0 is taken as 0.
template <typename Real>
BasicTensor<Real> sqrt(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> relu(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> sigmoid(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> log_sigmoid(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> atan(const BasicTensor<Real>& x);

// Full reduction to a rank-0 tensor.
template <typename Real>
BasicTensor<Real> sum(const BasicTensor<Real>& x);
template <typename Real>
BasicTensor<Real> mean(const BasicTensor<Real>& x);
// Per-row reduction over columns: R x C -> R x 1.
template <typename Real>
BasicTensor<Real> row_sum(const BasicTensor<Real>& x);

// out[:, j] = x[:, index[j]]. Covers channel permutation and slicing.
template <typename Real>
BasicTensor<Real> gather_cols(const BasicTensor<Real>& x, std::span<const std::size_t> index);
// out[i, :] = x[index[i], :]. Repeated indices accumulate in backward.
template <typename Real>
BasicTensor<Real> gather_rows(const BasicTensor<Real>& x, std::span<const std::size_t> index);
template <typename Real>
BasicTensor<Real> concat_cols(const BasicTensor<Real>& a, const BasicTensor<Real>& b);

// out = x * scale + shift with 1 x C scale/shift broadcast over rows.
template <typename Real>
BasicTensor<Real> affine(const BasicTensor<Real>& x, const BasicTensor<Real>& scale,
                         const BasicTensor<Real>& shift);

template <typename Real>
struct BatchNormResult {
  BasicTensor<Real> output;
  std::vector<double> batch_mean;
  std::vector<double> batch_var;  // biased (population) variance
};

// Training-mode batch normalization over rows of an N x C input, using the
// batch's own statistics. A zero-variance channel normalizes to 0 (eps keeps
// the denominator positive).
template <typename Real>
BatchNormResult<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                                 const BasicTensor<Real>& beta, double eps);

template <typename Real>
BasicTensor<Real> operator+(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return add(a, b);
}
template <typename Real>
BasicTensor<Real> operator-(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return sub(a, b);
}
template <typename Real>
BasicTensor<Real> operator*(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return mul(a, b);
}
template <typename Real>
BasicTensor<Real> operator/(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return div(a, b);
}
template <typename Real>
BasicTensor<Real> operator+(const BasicTensor<Real>& a, double s) {
  return add(a, BasicTensor<Real>::scalar(static_cast<Real>(s)));
}
template <typename Real>
BasicTensor<Real> operator-(const BasicTensor<Real>& a, double s) {
  return sub(a, BasicTensor<Real>::scalar(static_cast<Real>(s)));
}
template <typename Real>
BasicTensor<Real> operator-(double s, const BasicTensor<Real>& a) {
  return sub(BasicTensor<Real>::scalar(static_cast<Real>(s)), a);
}
template <typename Real>
BasicTensor<Real> operator*(const BasicTensor<Real>& a, double s) {
  return mul(a, BasicTensor<Real>::scalar(static_cast<Real>(s)));
}
template <typename Real>
BasicTensor<Real> operator*(double s, const BasicTensor<Real>& a) {
  return mul(BasicTensor<Real>::scalar(static_cast<Real>(s)), a);
}
template <typename Real>
BasicTensor<Real> operator-(const BasicTensor<Real>& a) {
  return mul(a, BasicTensor<Real>::scalar(Real(-1)));
}

}  // namespace resad
