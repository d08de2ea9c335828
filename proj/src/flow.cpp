#include "resad/flow.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "resad/errors.hpp"

namespace resad {

namespace {

std::vector<std::size_t> iota_from(std::size_t start, std::size_t count) {
  std::vector<std::size_t> v(count);
  std::iota(v.begin(), v.end(), start);
  return v;
}

template <typename Real>
BasicTensor<Real> row_constant(const std::vector<double>& v) {
  std::vector<Real> d(v.begin(), v.end());
  return BasicTensor<Real>(Shape{1, v.size()}, std::move(d));
}

template <typename Real>
BasicTensor<Real> label_column(std::span<const std::uint8_t> labels, std::size_t rows) {
  if (labels.size() != rows) {
    throw DimensionError("got " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " positions");
  }
  std::vector<Real> y(rows);
  for (std::size_t i = 0; i < rows; ++i) y[i] = labels[i] ? Real(1) : Real(0);
  return BasicTensor<Real>(Shape{rows, 1}, std::move(y));
}

template <typename Real>
void check_finite(const BasicTensor<Real>& x) {
  for (Real v : x.data()) {
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("non-finite value entering the flow");
  }
}

// Clamped scale logits and shifts of one block, computed from the conditioning half.
template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> subnet(const CouplingBlock<Real>& b, const BasicTensor<Real>& x1,
                                                       std::size_t len2, double clamp) {
  const auto h = relu(matmul(x1, b.w1) + b.b1);
  const auto o = matmul(h, b.w2) + b.b2;
  const auto s_idx = iota_from(0, len2);
  const auto t_idx = iota_from(len2, len2);
  auto s = soft_clamp(gather_cols(o, std::span<const std::size_t>(s_idx)), clamp);
  auto t = gather_cols(o, std::span<const std::size_t>(t_idx));
  return {std::move(s), std::move(t)};
}

double log_abs_scale(const std::vector<double>& scale) {
  double s = 0.0;
  for (double v : scale) s += std::log(std::fabs(v));
  return s;
}

bool all_ones(const std::vector<double>& v) {
  for (double x : v) {
    if (x != 1.0) return false;
  }
  return true;
}

}  // namespace

template <typename Real>
FlowLayer<Real> FlowLayer<Real>::init(std::size_t channels, std::size_t n_blocks, double clamp, Rng& rng) {
  if (channels < 2) throw ContractError("a coupling flow needs at least 2 channels");
  if (n_blocks == 0) throw ContractError("a flow needs at least one coupling block");
  if (!(clamp > 0.0)) throw ContractError("clamp coefficient must be positive");
  FlowLayer f;
  f.channels = channels;
  f.clamp = clamp;
  const std::size_t l1 = f.len1();
  const std::size_t l2 = f.len2();
  const std::size_t hidden = 2 * channels;
  const double bound = 1.0 / std::sqrt(static_cast<double>(l1));
  for (std::size_t k = 0; k < n_blocks; ++k) {
    CouplingBlock<Real> b;
    std::vector<Real> w1(l1 * hidden), b1(hidden);
    for (auto& v : w1) v = static_cast<Real>(rng.uniform(-bound, bound));
    for (auto& v : b1) v = static_cast<Real>(rng.uniform(-bound, bound));
    b.w1 = BasicTensor<Real>(Shape{l1, hidden}, std::move(w1), true);
    b.b1 = BasicTensor<Real>(Shape{1, hidden}, std::move(b1), true);
    b.w2 = BasicTensor<Real>::zeros({hidden, 2 * l2}, true);
    b.b2 = BasicTensor<Real>::zeros({1, 2 * l2}, true);
    b.permutation = iota_from(0, channels);
    rng.shuffle(b.permutation);
    b.fixed_scale.assign(channels, 1.0);
    f.blocks.push_back(std::move(b));
  }
  return f;
}

template <typename Real>
FlowOutput<Real> FlowLayer<Real>::forward(const BasicTensor<Real>& x) const {
  if (x.cols() != channels) {
    throw DimensionError("flow expects " + std::to_string(channels) + " channels, got " + std::to_string(x.cols()));
  }
  check_finite(x);
  const auto idx1 = iota_from(0, len1());
  const auto idx2 = iota_from(len1(), len2());
  BasicTensor<Real> y = x;
  BasicTensor<Real> log_det = BasicTensor<Real>::zeros({x.rows(), 1});
  for (const auto& b : blocks) {
    const auto x1 = gather_cols(y, std::span<const std::size_t>(idx1));
    const auto x2 = gather_cols(y, std::span<const std::size_t>(idx2));
    const auto [s, t] = subnet(b, x1, len2(), clamp);
    y = gather_cols(concat_cols(x1, x2 * exp(s) + t), std::span<const std::size_t>(b.permutation));
    log_det = log_det + row_sum(s);
    if (!all_ones(b.fixed_scale)) {
      y = y * row_constant<Real>(b.fixed_scale);
      log_det = log_det + log_abs_scale(b.fixed_scale);
    }
  }
  return {y, log_det};
}

template <typename Real>
FlowOutput<Real> FlowLayer<Real>::inverse(const BasicTensor<Real>& z) const {
  if (z.cols() != channels) {
    throw DimensionError("flow expects " + std::to_string(channels) + " channels, got " + std::to_string(z.cols()));
  }
  check_finite(z);
  const auto idx1 = iota_from(0, len1());
  const auto idx2 = iota_from(len1(), len2());
  BasicTensor<Real> y = z;
  BasicTensor<Real> log_det = BasicTensor<Real>::zeros({z.rows(), 1});
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
    const auto& b = *it;
    if (!all_ones(b.fixed_scale)) {
      std::vector<double> inv(b.fixed_scale.size());
      for (std::size_t c = 0; c < inv.size(); ++c) inv[c] = 1.0 / b.fixed_scale[c];
      y = y * row_constant<Real>(inv);
      log_det = log_det - log_abs_scale(b.fixed_scale);
    }
    std::vector<std::size_t> unperm(channels);
    for (std::size_t j = 0; j < channels; ++j) unperm[b.permutation[j]] = j;
    y = gather_cols(y, std::span<const std::size_t>(unperm));
    const auto x1 = gather_cols(y, std::span<const std::size_t>(idx1));
    const auto y2 = gather_cols(y, std::span<const std::size_t>(idx2));
    const auto [s, t] = subnet(b, x1, len2(), clamp);
    y = concat_cols(x1, (y2 - t) * exp(-s));
    log_det = log_det - row_sum(s);
  }
  return {y, log_det};
}

template <typename Real>
std::vector<BasicTensor<Real>> FlowLayer<Real>::parameters() const {
  std::vector<BasicTensor<Real>> p;
  for (const auto& b : blocks) {
    p.push_back(b.w1);
    p.push_back(b.b1);
    p.push_back(b.w2);
    p.push_back(b.b2);
  }
  return p;
}

template struct FlowLayer<float>;
template struct FlowLayer<double>;

double soft_clamp(double s, double c) {
  if (!(c > 0.0)) throw ContractError("clamp coefficient must be positive");
  return 2.0 * c / std::numbers::pi * std::atan(s / c);
}

template <typename Real>
BasicTensor<Real> soft_clamp(const BasicTensor<Real>& s, double c) {
  if (!(c > 0.0)) throw ContractError("clamp coefficient must be positive");
  return atan(s * (1.0 / c)) * (2.0 * c / std::numbers::pi);
}

namespace {
template <typename Real>
BasicTensor<Real> mean_offset(std::size_t channels, Base base, double a) {
  return BasicTensor<Real>::full({1, channels}, base == Base::kAbnormal ? static_cast<Real>(a) : Real(0));
}
}  // namespace

template <typename Real>
BasicTensor<Real> log_prob(const BasicTensor<Real>& z, const BasicTensor<Real>& log_det, Base base, double a) {
  const double c = static_cast<double>(z.cols());
  const auto d = base == Base::kNormal ? z : z - mean_offset<Real>(z.cols(), base, a);
  return log_det - row_sum(d * d) * 0.5 - 0.5 * c * std::log(2.0 * std::numbers::pi);
}

double log_prob(std::span<const double> z, double log_det, Base base, double a) {
  const double mu = base == Base::kAbnormal ? a : 0.0;
  double sq = 0.0;
  for (double v : z) sq += (v - mu) * (v - mu);
  return -0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi) - 0.5 * sq + log_det;
}

template <typename Real>
BasicTensor<Real> ml_loss(const BasicTensor<Real>& lp_normal, const BasicTensor<Real>& lp_abnormal,
                          std::span<const std::uint8_t> labels) {
  if (lp_normal.numel() == 0) throw ContractError("ml_loss over an empty batch");
  const auto y = label_column<Real>(labels, lp_normal.rows());
  return -mean((1.0 - y) * lp_normal + y * lp_abnormal);
}

double classification_score(double lp_normal, double lp_abnormal) {
  const double d = lp_abnormal - lp_normal;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

template <typename Real>
BasicTensor<Real> focal_loss(const BasicTensor<Real>& scores, std::span<const std::uint8_t> labels, double gamma) {
  if (scores.numel() == 0) throw ContractError("focal loss over an empty batch");
  for (Real s : scores.data()) {
    if (!(s > Real(0) && s < Real(1))) throw DomainError("focal loss needs scores in (0, 1)");
  }
  const auto y = label_column<Real>(labels, scores.rows());
  const auto p_t = y * scores + (1.0 - y) * (1.0 - scores);
  return -mean(exp(log(1.0 - p_t) * gamma) * log(p_t));
}

template <typename Real>
BasicTensor<Real> focal_loss_from_logits(const BasicTensor<Real>& logits, std::span<const std::uint8_t> labels,
                                         double gamma) {
  if (logits.numel() == 0) throw ContractError("focal loss over an empty batch");
  const auto y = label_column<Real>(labels, logits.rows());
  // signed logit u: p_t = sigmoid(u), 1 - p_t = sigmoid(-u)
  const auto u = logits * (y * 2.0 - 1.0);
  return -mean(exp(log_sigmoid(-u) * gamma) * log_sigmoid(u));
}

template <typename Real>
BasicTensor<Real> nf_total_loss(const FlowOutput<Real>& out, std::span<const std::uint8_t> labels, double a,
                                double gamma) {
  const auto lp_n = log_prob(out.z, out.log_det, Base::kNormal, a);
  const auto lp_a = log_prob(out.z, out.log_det, Base::kAbnormal, a);
  return ml_loss(lp_n, lp_a, labels) + focal_loss_from_logits(lp_a - lp_n, labels, gamma);
}

#define RESAD_INSTANTIATE(R)                                                                                  \
  template BasicTensor<R> soft_clamp(const BasicTensor<R>&, double);                                          \
  template BasicTensor<R> log_prob(const BasicTensor<R>&, const BasicTensor<R>&, Base, double);              \
  template BasicTensor<R> ml_loss(const BasicTensor<R>&, const BasicTensor<R>&, std::span<const std::uint8_t>); \
  template BasicTensor<R> focal_loss(const BasicTensor<R>&, std::span<const std::uint8_t>, double);           \
  template BasicTensor<R> focal_loss_from_logits(const BasicTensor<R>&, std::span<const std::uint8_t>, double); \
  template BasicTensor<R> nf_total_loss(const FlowOutput<R>&, std::span<const std::uint8_t>, double, double);

RESAD_INSTANTIATE(float)
RESAD_INSTANTIATE(double)

#undef RESAD_INSTANTIATE

}  // namespace resad
