#include "resad/constraintor.hpp"

#include <algorithm>
#include <cmath>

#include "resad/errors.hpp"

namespace resad {

namespace {

template <typename Real>
BasicTensor<Real> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return BasicTensor<Real>(std::move(shape), std::move(v), true);
}

template <typename Real>
BasicTensor<Real> row_constant(const std::vector<double>& v) {
  std::vector<Real> d(v.begin(), v.end());
  return BasicTensor<Real>(Shape{1, v.size()}, std::move(d));
}

}  // namespace

template <typename Real>
ConstraintorLayer<Real> ConstraintorLayer<Real>::init(std::size_t channels, Rng& rng) {
  if (channels == 0) throw ContractError("constraintor needs at least one channel");
  ConstraintorLayer layer;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  layer.conv_a_weight = uniform_tensor<Real>({channels, channels}, bound, rng);
  layer.conv_a_bias = uniform_tensor<Real>({1, channels}, bound, rng);
  layer.bn_gamma = BasicTensor<Real>::full({1, channels}, Real(1), true);
  layer.bn_beta = BasicTensor<Real>::zeros({1, channels}, true);
  layer.conv_b_weight = uniform_tensor<Real>({channels, channels}, bound, rng);
  layer.conv_b_bias = uniform_tensor<Real>({1, channels}, bound, rng);
  layer.running_mean.assign(channels, 0.0);
  layer.running_var.assign(channels, 1.0);
  return layer;
}

template <typename Real>
BasicTensor<Real> ConstraintorLayer<Real>::forward(const BasicTensor<Real>& x, Mode mode) {
  if (mode == Mode::kEval) return forward_eval(x);
  if (x.cols() != channels()) {
    throw DimensionError("constraintor expects " + std::to_string(channels()) + " channels, got " +
                         std::to_string(x.cols()));
  }
  auto h = matmul(x, conv_a_weight) + conv_a_bias;
  auto bn = batch_norm(h, bn_gamma, bn_beta, bn_eps);
  const double n = static_cast<double>(x.rows());
  for (std::size_t c = 0; c < channels(); ++c) {
    const double unbiased = n > 1 ? bn.batch_var[c] * n / (n - 1) : bn.batch_var[c];
    running_mean[c] = (1.0 - bn_momentum) * running_mean[c] + bn_momentum * bn.batch_mean[c];
    running_var[c] = (1.0 - bn_momentum) * running_var[c] + bn_momentum * unbiased;
  }
  return matmul(relu(bn.output), conv_b_weight) + conv_b_bias;
}

template <typename Real>
BasicTensor<Real> ConstraintorLayer<Real>::forward_eval(const BasicTensor<Real>& x) const {
  if (x.cols() != channels()) {
    throw DimensionError("constraintor expects " + std::to_string(channels()) + " channels, got " +
                         std::to_string(x.cols()));
  }
  std::vector<double> inv_std(channels()), neg_mean(channels());
  for (std::size_t c = 0; c < channels(); ++c) {
    inv_std[c] = 1.0 / std::sqrt(running_var[c] + bn_eps);
    neg_mean[c] = -running_mean[c];
  }
  auto h = matmul(x, conv_a_weight) + conv_a_bias;
  auto normalized = (h + row_constant<Real>(neg_mean)) * row_constant<Real>(inv_std);
  auto bn = normalized * bn_gamma + bn_beta;
  return matmul(relu(bn), conv_b_weight) + conv_b_bias;
}

template <typename Real>
std::vector<BasicTensor<Real>> ConstraintorLayer<Real>::parameters() const {
  return {conv_a_weight, conv_a_bias, bn_gamma, bn_beta, conv_b_weight, conv_b_bias};
}

template struct ConstraintorLayer<float>;
template struct ConstraintorLayer<double>;

namespace {
template <typename T>
double pseudo_huber_impl(std::span<const T> v) {
  double sq = 0.0;
  for (T x : v) sq += static_cast<double>(x) * x;
  // sqrt(sq + 1) - 1 without cancellation for small sq
  return sq / (std::sqrt(sq + 1.0) + 1.0);
}
}  // namespace

double pseudo_huber_dist(std::span<const float> v) { return pseudo_huber_impl(v); }
double pseudo_huber_dist(std::span<const double> v) { return pseudo_huber_impl(v); }

template <typename Real>
BasicTensor<Real> pseudo_huber_dist(const BasicTensor<Real>& x) {
  return sqrt(row_sum(x * x) + 1.0) - 1.0;
}

double log_barrier_term(double s, double t) {
  if (!(t > 0.0)) throw ContractError("barrier precision t must be positive");
  // -log_sigmoid(-s) = log(1 + e^s)
  const double softplus = s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  return softplus * std::exp(s) / t;
}

template <typename Real>
BasicTensor<Real> log_barrier_term(const BasicTensor<Real>& s, double t) {
  if (!(t > 0.0)) throw ContractError("barrier precision t must be positive");
  return -(log_sigmoid(-s) * exp(s)) * (1.0 / t);
}

template <typename Real>
BasicTensor<Real> log_barrier_occ_loss(const BasicTensor<Real>& distances, double radius, double t) {
  if (distances.numel() == 0) throw ContractError("OCC loss over an empty set");
  return mean(log_barrier_term(distances - radius, t));
}

template <typename Real>
BasicTensor<Real> bi_occ_loss(const BasicTensor<Real>& distances, const HypersphereConfig& cfg) {
  if (distances.numel() == 0) throw ContractError("bi-contraction OCC loss over an empty set");
  auto outer = log_barrier_term(distances - cfg.r_max, cfg.t);
  auto inner = log_barrier_term(cfg.r_min - distances, cfg.t);
  return mean(outer + inner);
}

template <typename Real>
BasicTensor<Real> invariance_term(const BasicTensor<Real>& abnormal_residuals,
                                  const BasicTensor<Real>& abnormal_constrained) {
  if (abnormal_residuals.numel() == 0) return BasicTensor<Real>::scalar(Real(0));
  auto diff = abnormal_constrained - abnormal_residuals;
  return mean(sqrt(row_sum(diff * diff)));
}

template <typename Real>
BasicTensor<Real> ai_occ_loss(const BasicTensor<Real>& normal_distances,
                              const BasicTensor<Real>& abnormal_residuals,
                              const BasicTensor<Real>& abnormal_constrained, const HypersphereConfig& cfg) {
  auto base = bi_occ_loss(normal_distances, cfg);
  if (abnormal_residuals.numel() == 0) return base;
  return base + invariance_term(abnormal_residuals, abnormal_constrained);
}

HypersphereConfig dynamic_radii(std::span<const double> abnormal_distances, const HypersphereConfig& base) {
  HypersphereConfig cfg = base;
  double r = kRadiusCap;
  if (!abnormal_distances.empty()) {
    r = std::min(*std::max_element(abnormal_distances.begin(), abnormal_distances.end()), kRadiusCap);
  }
  cfg.r_max = r;
  cfg.r_min = kRadiusRatio * r;
  return cfg;
}

template <typename Real>
BasicTensor<Real> weight_regularizer(const std::vector<BasicTensor<Real>>& weights, double lambda) {
  if (lambda < 0.0) throw ContractError("lambda must be non-negative");
  BasicTensor<Real> total = BasicTensor<Real>::scalar(Real(0));
  for (const auto& w : weights) total = total + sum(w * w);
  return total * (lambda / 2.0);
}

SoapBubbleResult soap_bubble_check(std::size_t dim, double t, std::size_t n_samples, std::uint64_t seed) {
  const double d = static_cast<double>(dim);
  const double radius_sq = d - 2.0 * std::sqrt(d * t);
  if (!(t >= 0.0) || !(radius_sq > 0.0)) throw ContractError("soap bubble check needs d - 2 sqrt(d t) > 0");
  if (n_samples < 1000) throw ContractError("soap bubble check needs at least 1000 samples");
  SoapBubbleResult res;
  res.threshold = std::sqrt(radius_sq);
  res.bound = 1.0 - std::exp(-t);
  Rng rng(seed);
  std::size_t outside = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double z = rng.normal();
      sq += z * z;
    }
    if (sq >= radius_sq) ++outside;
  }
  const double n = static_cast<double>(n_samples);
  res.empirical_fraction = static_cast<double>(outside) / n;
  const double slack = 3.0 * std::sqrt(res.bound * (1.0 - res.bound) / n);
  res.passed = res.empirical_fraction >= res.bound - slack;
  return res;
}

#define RESAD_INSTANTIATE(R)                                                                              \
  template BasicTensor<R> pseudo_huber_dist(const BasicTensor<R>&);                                       \
  template BasicTensor<R> log_barrier_term(const BasicTensor<R>&, double);                                \
  template BasicTensor<R> log_barrier_occ_loss(const BasicTensor<R>&, double, double);                    \
  template BasicTensor<R> bi_occ_loss(const BasicTensor<R>&, const HypersphereConfig&);                   \
  template BasicTensor<R> invariance_term(const BasicTensor<R>&, const BasicTensor<R>&);                  \
  template BasicTensor<R> ai_occ_loss(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&, \
                                      const HypersphereConfig&);                                          \
  template BasicTensor<R> weight_regularizer(const std::vector<BasicTensor<R>>&, double);

RESAD_INSTANTIATE(float)
RESAD_INSTANTIATE(double)

#undef RESAD_INSTANTIATE

}  // namespace resad
