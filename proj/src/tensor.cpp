#include "resad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "resad/errors.hpp"

namespace resad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

struct Dims {
  std::size_t rows;
  std::size_t cols;
};

Dims dims_of(const Shape& s) {
  switch (s.size()) {
    case 0:
      return {1, 1};
    case 1:
      return {1, s[0]};
    case 2:
      return {s[0], s[1]};
    default:
      throw DimensionError("ops support rank <= 2, got shape " + shape_str(s));
  }
}

template <typename Real>
using ImplPtr = std::shared_ptr<detail::TensorImpl<Real>>;

template <typename Real>
ImplPtr<Real> new_impl(Shape shape, std::vector<Real> data) {
  auto impl = std::make_shared<detail::TensorImpl<Real>>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

template <typename Real>
bool any_requires_grad(std::initializer_list<const BasicTensor<Real>*> inputs) {
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Marks `out` as differentiable and appends its backward closure to the active
// tape, provided recording is on for these inputs.
template <typename Real, typename Fn>
void record(std::initializer_list<const BasicTensor<Real>*> inputs, const ImplPtr<Real>& out,
            Fn&& fn) {
  Tape* tape = active_tape();
  if (tape == nullptr || !any_requires_grad<Real>(inputs)) return;
  out->requires_grad = true;
  std::weak_ptr<detail::TensorImpl<Real>> weak_out = out;
  tape->record(out.get(), [weak_out, fn = std::forward<Fn>(fn)]() {
    auto o = weak_out.lock();
    if (!o || o->grad.size() != o->data.size()) return;
    fn(o->grad);
  });
}

// Result shape of a broadcasting binary op.
Shape broadcast_shape(const Shape& a, const Shape& b, Dims& out) {
  Dims da = dims_of(a), db = dims_of(b);
  auto pick = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
  };
  out.rows = pick(da.rows, db.rows);
  out.cols = pick(da.cols, db.cols);
  if (a.empty() && b.empty()) return {};
  return {out.rows, out.cols};
}

struct BroadcastIndex {
  Dims src;
  std::size_t operator()(std::size_t r, std::size_t c) const {
    return (src.rows == 1 ? 0 : r) * src.cols + (src.cols == 1 ? 0 : c);
  }
};

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

template <typename Real>
BasicTensor<Real> binary(const BasicTensor<Real>& a, const BasicTensor<Real>& b, BinaryKind kind) {
  Dims od{};
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), od);
  BroadcastIndex ia{dims_of(a.shape())}, ib{dims_of(b.shape())};
  std::vector<Real> out(od.rows * od.cols);
  const auto& av = a.impl()->data;
  const auto& bv = b.impl()->data;
  for (std::size_t r = 0; r < od.rows; ++r) {
    for (std::size_t c = 0; c < od.cols; ++c) {
      const Real x = av[ia(r, c)], y = bv[ib(r, c)];
      Real v{};
      switch (kind) {
        case BinaryKind::kAdd: v = x + y; break;
        case BinaryKind::kSub: v = x - y; break;
        case BinaryKind::kMul: v = x * y; break;
        case BinaryKind::kDiv: v = x / y; break;
      }
      out[r * od.cols + c] = v;
    }
  }
  auto impl = new_impl<Real>(std::move(out_shape), std::move(out));
  auto pa = a.impl(), pb = b.impl();
  record<Real>({&a, &b}, impl, [pa, pb, ia, ib, od, kind](const std::vector<Real>& g) {
    const bool ga = pa->requires_grad, gb = pb->requires_grad;
    std::vector<Real>* da = ga ? &pa->ensure_grad() : nullptr;
    std::vector<Real>* db = gb ? &pb->ensure_grad() : nullptr;
    for (std::size_t r = 0; r < od.rows; ++r) {
      for (std::size_t c = 0; c < od.cols; ++c) {
        const Real go = g[r * od.cols + c];
        const std::size_t ka = ia(r, c), kb = ib(r, c);
        switch (kind) {
          case BinaryKind::kAdd:
            if (da) (*da)[ka] += go;
            if (db) (*db)[kb] += go;
            break;
          case BinaryKind::kSub:
            if (da) (*da)[ka] += go;
            if (db) (*db)[kb] -= go;
            break;
          case BinaryKind::kMul:
            if (da) (*da)[ka] += go * pb->data[kb];
            if (db) (*db)[kb] += go * pa->data[ka];
            break;
          case BinaryKind::kDiv: {
            const Real y = pb->data[kb];
            if (da) (*da)[ka] += go / y;
            if (db) (*db)[kb] -= go * pa->data[ka] / (y * y);
            break;
          }
        }
      }
    }
  });
  return BasicTensor<Real>(impl);
}

// Elementwise unary op. `deriv(x, y)` gives dy/dx from input and output.
template <typename Real, typename Fwd, typename Deriv>
BasicTensor<Real> unary(const BasicTensor<Real>& x, Fwd fwd, Deriv deriv) {
  dims_of(x.shape());
  const auto& xv = x.impl()->data;
  std::vector<Real> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto impl = new_impl<Real>(x.shape(), std::move(out));
  auto px = x.impl();
  std::weak_ptr<detail::TensorImpl<Real>> weak_self = impl;
  record<Real>({&x}, impl, [px, weak_self, deriv](const std::vector<Real>& g) {
    auto self = weak_self.lock();
    auto& dx = px->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * deriv(px->data[i], self->data[i]);
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
Real stable_log_sigmoid(Real x) {
  // log(1 / (1 + e^-x)) without overflow on either tail.
  return x < Real(0) ? x - std::log1p(std::exp(x)) : -std::log1p(std::exp(-x));
}

template <typename Real>
Real stable_sigmoid(Real x) {
  if (x >= Real(0)) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(const void* output, Node backward) {
  nodes_.push_back(std::move(backward));
  outputs_.push_back(output);
}

void Tape::clear() {
  nodes_.clear();
  outputs_.clear();
}

template <typename Real>
void Tape::backward(const BasicTensor<Real>& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  }
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericError("backward() on a non-finite loss");
  }
  const void* key = loss.impl().get();
  if (!loss.requires_grad() ||
      std::find(outputs_.rbegin(), outputs_.rend(), key) == outputs_.rend()) {
    throw ContractError("loss was not produced on this tape");
  }
  loss.impl()->ensure_grad()[0] += Real(1);
  visits_ = 0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    (*it)();
    ++visits_;
  }
  clear();
}

template void Tape::backward<float>(const BasicTensor<float>&);
template void Tape::backward<double>(const BasicTensor<double>&);

// ---------------------------------------------------------------------------
// BasicTensor
// ---------------------------------------------------------------------------

template <typename Real>
BasicTensor<Real>::BasicTensor() : impl_(new_impl<Real>(Shape{0}, {})) {}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  impl_ = new_impl<Real>(std::move(shape), std::move(data));
  impl_->requires_grad = requires_grad;
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<Real>(n, value), requires_grad);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::scalar(Real value, bool requires_grad) {
  return BasicTensor(Shape{}, std::vector<Real>{value}, requires_grad);
}

template <typename Real>
std::size_t BasicTensor<Real>::rows() const {
  return dims_of(impl_->shape).rows;
}

template <typename Real>
std::size_t BasicTensor<Real>::cols() const {
  return dims_of(impl_->shape).cols;
}

template <typename Real>
Real BasicTensor<Real>::item() const {
  if (impl_->data.size() != 1) throw ContractError("item() on a tensor of " + shape_str(shape()));
  return impl_->data[0];
}

template <typename Real>
std::span<const Real> BasicTensor<Real>::grad() const {
  if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), Real(0));
  return impl_->grad;
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::detach() const {
  return BasicTensor(impl_->shape, impl_->data, false);
}

template class BasicTensor<float>;
template class BasicTensor<double>;

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

template <typename Real>
BasicTensor<Real> matmul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  const Dims da = dims_of(a.shape()), db = dims_of(b.shape());
  if (da.cols != db.rows) {
    throw DimensionError("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t n = da.rows, k = da.cols, m = db.cols;
  const auto& av = a.impl()->data;
  const auto& bv = b.impl()->data;
  std::vector<Real> out(n * m);
  std::vector<double> acc(m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const Real* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) acc[j] += x * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = static_cast<Real>(acc[j]);
  }
  auto impl = new_impl<Real>(Shape{n, m}, std::move(out));
  auto pa = a.impl(), pb = b.impl();
  record<Real>({&a, &b}, impl, [pa, pb, n, k, m](const std::vector<Real>& g) {
    if (pa->requires_grad) {
      // dA = dC * B^T
      auto& ga = pa->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const Real* brow = pb->data.data() + p * m;
          const Real* grow = g.data() + i * m;
          for (std::size_t j = 0; j < m; ++j) s += static_cast<double>(grow[j]) * brow[j];
          ga[i * k + p] += static_cast<Real>(s);
        }
      }
    }
    if (pb->requires_grad) {
      // dB = A^T * dC
      auto& gb = pb->ensure_grad();
      std::vector<double> acc(k * m, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const Real* grow = g.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double x = pa->data[i * k + p];
          if (x == 0.0) continue;
          double* arow = acc.data() + p * m;
          for (std::size_t j = 0; j < m; ++j) arow[j] += x * static_cast<double>(grow[j]);
        }
      }
      for (std::size_t q = 0; q < k * m; ++q) gb[q] += static_cast<Real>(acc[q]);
    }
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return binary(a, b, BinaryKind::kAdd);
}
template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return binary(a, b, BinaryKind::kSub);
}
template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return binary(a, b, BinaryKind::kMul);
}
template <typename Real>
BasicTensor<Real> div(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return binary(a, b, BinaryKind::kDiv);
}

template <typename Real>
BasicTensor<Real> exp(const BasicTensor<Real>& x) {
  return unary(x, [](Real v) { return std::exp(v); }, [](Real, Real y) { return y; });
}

template <typename Real>
BasicTensor<Real> log(const BasicTensor<Real>& x) {
  for (Real v : x.data()) {
    if (!(v > Real(0))) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return unary(x, [](Real v) { return std::log(v); }, [](Real v, Real) { return Real(1) / v; });
}

template <typename Real>
BasicTensor<Real> sqrt(const BasicTensor<Real>& x) {
  for (Real v : x.data()) {
    if (v < Real(0)) throw DomainError("sqrt of negative value " + std::to_string(v));
  }
  return unary(
      x, [](Real v) { return std::sqrt(v); },
      [](Real, Real y) { return y > Real(0) ? Real(0.5) / y : Real(0); });
}

template <typename Real>
BasicTensor<Real> relu(const BasicTensor<Real>& x) {
  return unary(
      x, [](Real v) { return v > Real(0) ? v : Real(0); },
      [](Real v, Real) { return v > Real(0) ? Real(1) : Real(0); });
}

template <typename Real>
BasicTensor<Real> sigmoid(const BasicTensor<Real>& x) {
  return unary(
      x, [](Real v) { return stable_sigmoid(v); }, [](Real, Real y) { return y * (Real(1) - y); });
}

template <typename Real>
BasicTensor<Real> log_sigmoid(const BasicTensor<Real>& x) {
  return unary(
      x, [](Real v) { return stable_log_sigmoid(v); },
      [](Real v, Real) { return stable_sigmoid(-v); });
}

template <typename Real>
BasicTensor<Real> atan(const BasicTensor<Real>& x) {
  return unary(
      x, [](Real v) { return std::atan(v); }, [](Real v, Real) { return Real(1) / (Real(1) + v * v); });
}

template <typename Real>
BasicTensor<Real> sum(const BasicTensor<Real>& x) {
  dims_of(x.shape());
  double s = 0.0;
  for (Real v : x.data()) s += v;
  auto impl = new_impl<Real>(Shape{}, {static_cast<Real>(s)});
  auto px = x.impl();
  record<Real>({&x}, impl, [px](const std::vector<Real>& g) {
    auto& dx = px->ensure_grad();
    for (auto& d : dx) d += g[0];
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> mean(const BasicTensor<Real>& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  dims_of(x.shape());
  double s = 0.0;
  for (Real v : x.data()) s += v;
  const double n = static_cast<double>(x.numel());
  auto impl = new_impl<Real>(Shape{}, {static_cast<Real>(s / n)});
  auto px = x.impl();
  record<Real>({&x}, impl, [px, n](const std::vector<Real>& g) {
    auto& dx = px->ensure_grad();
    const Real share = static_cast<Real>(g[0] / n);
    for (auto& d : dx) d += share;
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> row_sum(const BasicTensor<Real>& x) {
  const Dims d = dims_of(x.shape());
  std::vector<Real> out(d.rows);
  const auto& xv = x.impl()->data;
  for (std::size_t r = 0; r < d.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < d.cols; ++c) s += xv[r * d.cols + c];
    out[r] = static_cast<Real>(s);
  }
  auto impl = new_impl<Real>(Shape{d.rows, 1}, std::move(out));
  auto px = x.impl();
  record<Real>({&x}, impl, [px, d](const std::vector<Real>& g) {
    auto& dx = px->ensure_grad();
    for (std::size_t r = 0; r < d.rows; ++r)
      for (std::size_t c = 0; c < d.cols; ++c) dx[r * d.cols + c] += g[r];
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> gather_cols(const BasicTensor<Real>& x, std::span<const std::size_t> index) {
  const Dims d = dims_of(x.shape());
  for (std::size_t j : index) {
    if (j >= d.cols) throw DimensionError("gather_cols index " + std::to_string(j) + " out of range");
  }
  const std::size_t m = index.size();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<Real> out(d.rows * m);
  const auto& xv = x.impl()->data;
  for (std::size_t r = 0; r < d.rows; ++r)
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = xv[r * d.cols + idx[j]];
  auto impl = new_impl<Real>(Shape{d.rows, m}, std::move(out));
  auto px = x.impl();
  record<Real>({&x}, impl, [px, d, idx = std::move(idx)](const std::vector<Real>& g) {
    auto& dx = px->ensure_grad();
    const std::size_t m = idx.size();
    for (std::size_t r = 0; r < d.rows; ++r)
      for (std::size_t j = 0; j < m; ++j) dx[r * d.cols + idx[j]] += g[r * m + j];
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> gather_rows(const BasicTensor<Real>& x, std::span<const std::size_t> index) {
  const Dims d = dims_of(x.shape());
  for (std::size_t i : index) {
    if (i >= d.rows) throw DimensionError("gather_rows index " + std::to_string(i) + " out of range");
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<Real> out(idx.size() * d.cols);
  const auto& xv = x.impl()->data;
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(xv.begin() + idx[r] * d.cols, d.cols, out.begin() + r * d.cols);
  auto impl = new_impl<Real>(Shape{idx.size(), d.cols}, std::move(out));
  auto px = x.impl();
  record<Real>({&x}, impl, [px, d, idx = std::move(idx)](const std::vector<Real>& g) {
    auto& dx = px->ensure_grad();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < d.cols; ++c) dx[idx[r] * d.cols + c] += g[r * d.cols + c];
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> concat_cols(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  const Dims da = dims_of(a.shape()), db = dims_of(b.shape());
  if (da.rows != db.rows) {
    throw DimensionError("concat_cols " + shape_str(a.shape()) + " with " + shape_str(b.shape()));
  }
  const std::size_t n = da.rows, m = da.cols + db.cols;
  std::vector<Real> out(n * m);
  const auto& av = a.impl()->data;
  const auto& bv = b.impl()->data;
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.begin() + r * da.cols, da.cols, out.begin() + r * m);
    std::copy_n(bv.begin() + r * db.cols, db.cols, out.begin() + r * m + da.cols);
  }
  auto impl = new_impl<Real>(Shape{n, m}, std::move(out));
  auto pa = a.impl(), pb = b.impl();
  record<Real>({&a, &b}, impl, [pa, pb, da, db, n, m](const std::vector<Real>& g) {
    if (pa->requires_grad) {
      auto& ga = pa->ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < da.cols; ++c) ga[r * da.cols + c] += g[r * m + c];
    }
    if (pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < db.cols; ++c) gb[r * db.cols + c] += g[r * m + da.cols + c];
    }
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BasicTensor<Real> affine(const BasicTensor<Real>& x, const BasicTensor<Real>& scale,
                         const BasicTensor<Real>& shift) {
  const Dims d = dims_of(x.shape());
  if (scale.numel() != d.cols || shift.numel() != d.cols) {
    throw DimensionError("affine scale/shift must have " + std::to_string(d.cols) + " entries");
  }
  std::vector<Real> out(d.rows * d.cols);
  const auto& xv = x.impl()->data;
  const auto& sv = scale.impl()->data;
  const auto& tv = shift.impl()->data;
  for (std::size_t r = 0; r < d.rows; ++r)
    for (std::size_t c = 0; c < d.cols; ++c)
      out[r * d.cols + c] = xv[r * d.cols + c] * sv[c] + tv[c];
  auto impl = new_impl<Real>(x.shape(), std::move(out));
  auto px = x.impl(), ps = scale.impl(), pt = shift.impl();
  record<Real>({&x, &scale, &shift}, impl, [px, ps, pt, d](const std::vector<Real>& g) {
    if (px->requires_grad) {
      auto& gx = px->ensure_grad();
      for (std::size_t r = 0; r < d.rows; ++r)
        for (std::size_t c = 0; c < d.cols; ++c) gx[r * d.cols + c] += g[r * d.cols + c] * ps->data[c];
    }
    if (ps->requires_grad || pt->requires_grad) {
      std::vector<double> gs(d.cols, 0.0), gt(d.cols, 0.0);
      for (std::size_t r = 0; r < d.rows; ++r) {
        for (std::size_t c = 0; c < d.cols; ++c) {
          const double go = g[r * d.cols + c];
          gs[c] += go * px->data[r * d.cols + c];
          gt[c] += go;
        }
      }
      if (ps->requires_grad) {
        auto& dst = ps->ensure_grad();
        for (std::size_t c = 0; c < d.cols; ++c) dst[c] += static_cast<Real>(gs[c]);
      }
      if (pt->requires_grad) {
        auto& dst = pt->ensure_grad();
        for (std::size_t c = 0; c < d.cols; ++c) dst[c] += static_cast<Real>(gt[c]);
      }
    }
  });
  return BasicTensor<Real>(impl);
}

template <typename Real>
BatchNormResult<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                                 const BasicTensor<Real>& beta, double eps) {
  const Dims d = dims_of(x.shape());
  if (gamma.numel() != d.cols || beta.numel() != d.cols) {
    throw DimensionError("batch_norm gamma/beta must have " + std::to_string(d.cols) + " entries");
  }
  if (d.rows == 0) throw ContractError("batch_norm over an empty batch");
  const std::size_t n = d.rows, c = d.cols;
  const auto& xv = x.impl()->data;
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) mu[j] += xv[r * c + j];
  for (auto& m : mu) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double dv = xv[r * c + j] - mu[j];
      var[j] += dv * dv;
    }
  for (auto& v : var) v /= static_cast<double>(n);
  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);

  std::vector<Real> xhat(n * c), out(n * c);
  const auto& gv = gamma.impl()->data;
  const auto& bv = beta.impl()->data;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (xv[r * c + j] - mu[j]) * inv_std[j];
      xhat[r * c + j] = static_cast<Real>(h);
      out[r * c + j] = static_cast<Real>(h * gv[j] + bv[j]);
    }
  auto impl = new_impl<Real>(x.shape(), std::move(out));
  auto px = x.impl(), pg = gamma.impl(), pb = beta.impl();
  record<Real>({&x, &gamma, &beta}, impl,
               [px, pg, pb, n, c, inv_std, xhat = std::move(xhat)](const std::vector<Real>& g) {
                 std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
                 for (std::size_t r = 0; r < n; ++r)
                   for (std::size_t j = 0; j < c; ++j) {
                     sum_g[j] += g[r * c + j];
                     sum_gx[j] += static_cast<double>(g[r * c + j]) * xhat[r * c + j];
                   }
                 if (pg->requires_grad) {
                   auto& dg = pg->ensure_grad();
                   for (std::size_t j = 0; j < c; ++j) dg[j] += static_cast<Real>(sum_gx[j]);
                 }
                 if (pb->requires_grad) {
                   auto& db = pb->ensure_grad();
                   for (std::size_t j = 0; j < c; ++j) db[j] += static_cast<Real>(sum_g[j]);
                 }
                 if (px->requires_grad) {
                   auto& dx = px->ensure_grad();
                   const double nn = static_cast<double>(n);
                   for (std::size_t r = 0; r < n; ++r)
                     for (std::size_t j = 0; j < c; ++j) {
                       const double k = pg->data[j] * inv_std[j] / nn;
                       dx[r * c + j] += static_cast<Real>(
                           k * (nn * g[r * c + j] - sum_g[j] - xhat[r * c + j] * sum_gx[j]));
                     }
                 }
               });
  return {BasicTensor<Real>(impl), std::move(mu), std::move(var)};
}

#define RESAD_INSTANTIATE_OPS(R)                                                                  \
  template BasicTensor<R> matmul(const BasicTensor<R>&, const BasicTensor<R>&);                   \
  template BasicTensor<R> add(const BasicTensor<R>&, const BasicTensor<R>&);                      \
  template BasicTensor<R> sub(const BasicTensor<R>&, const BasicTensor<R>&);                      \
  template BasicTensor<R> mul(const BasicTensor<R>&, const BasicTensor<R>&);                      \
  template BasicTensor<R> div(const BasicTensor<R>&, const BasicTensor<R>&);                      \
  template BasicTensor<R> exp(const BasicTensor<R>&);                                             \
  template BasicTensor<R> log(const BasicTensor<R>&);                                             \
  template BasicTensor<R> sqrt(const BasicTensor<R>&);                                            \
  template BasicTensor<R> relu(const BasicTensor<R>&);                                            \
  template BasicTensor<R> sigmoid(const BasicTensor<R>&);                                         \
  template BasicTensor<R> log_sigmoid(const BasicTensor<R>&);                                     \
  template BasicTensor<R> atan(const BasicTensor<R>&);                                            \
  template BasicTensor<R> sum(const BasicTensor<R>&);                                             \
  template BasicTensor<R> mean(const BasicTensor<R>&);                                            \
  template BasicTensor<R> row_sum(const BasicTensor<R>&);                                         \
  template BasicTensor<R> gather_cols(const BasicTensor<R>&, std::span<const std::size_t>);       \
  template BasicTensor<R> gather_rows(const BasicTensor<R>&, std::span<const std::size_t>);       \
  template BasicTensor<R> concat_cols(const BasicTensor<R>&, const BasicTensor<R>&);              \
  template BasicTensor<R> affine(const BasicTensor<R>&, const BasicTensor<R>&,                    \
                                 const BasicTensor<R>&);                                          \
  template BatchNormResult<R> batch_norm(const BasicTensor<R>&, const BasicTensor<R>&,            \
                                         const BasicTensor<R>&, double);

RESAD_INSTANTIATE_OPS(float)
RESAD_INSTANTIATE_OPS(double)

#undef RESAD_INSTANTIATE_OPS

}  // namespace resad
