#pragma once
//
// Feature constraintor (per layer 1x1 conv -> batch norm -> relu -> 1x1 conv)
// and the objectives that pull normal residual features into the shell
// R_min <= Dis(x, 0) <= R_max around a fixed zero center, where
// Dis(v, 0) = sqrt(||v||^2 + 1) - 1.
//

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resad/rng.hpp"
#include "resad/tensor.hpp"

namespace resad {

enum class Mode { kTrain, kEval };

template <typename Real>
struct ConstraintorLayer {
  BasicTensor<Real> conv_a_weight;  // C x C, input-major (x * W)
  BasicTensor<Real> conv_a_bias;    // 1 x C
  BasicTensor<Real> bn_gamma;       // 1 x C
  BasicTensor<Real> bn_beta;        // 1 x C
  BasicTensor<Real> conv_b_weight;  // C x C
  BasicTensor<Real> conv_b_bias;    // 1 x C
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  // Uniform fan-in initialization of both convolutions; unit batch norm.
  static ConstraintorLayer init(std::size_t channels, Rng& rng);

  std::size_t channels() const { return conv_a_weight.rows(); }

  // N x C -> N x C. Training mode normalizes with batch statistics and
  // updates the running statistics; evaluation mode uses the running ones.
  BasicTensor<Real> forward(const BasicTensor<Real>& x, Mode mode);
  BasicTensor<Real> forward_eval(const BasicTensor<Real>& x) const;

  std::vector<BasicTensor<Real>> parameters() const;
  // Weight matrices only; the regularizer skips biases and batch norm.
  std::vector<BasicTensor<Real>> weights() const { return {conv_a_weight, conv_b_weight}; }
};

template <typename To, typename From>
ConstraintorLayer<To> cast_layer(const ConstraintorLayer<From>& src) {
  ConstraintorLayer<To> out;
  auto conv = [](const BasicTensor<From>& t) {
    auto c = cast<To>(t);
    c.set_requires_grad(t.requires_grad());
    return c;
  };
  out.conv_a_weight = conv(src.conv_a_weight);
  out.conv_a_bias = conv(src.conv_a_bias);
  out.bn_gamma = conv(src.bn_gamma);
  out.bn_beta = conv(src.bn_beta);
  out.conv_b_weight = conv(src.conv_b_weight);
  out.conv_b_bias = conv(src.conv_b_bias);
  out.running_mean = src.running_mean;
  out.running_var = src.running_var;
  out.bn_eps = src.bn_eps;
  out.bn_momentum = src.bn_momentum;
  return out;
}

struct HypersphereConfig {
  double r_max = 0.4;
  double r_min = 0.396;
  double t = 1.0;        // barrier precision
  double lambda = 0.001;  // weight regularization
};

inline constexpr double kRadiusCap = 0.4;
inline constexpr double kRadiusRatio = 0.99;

double pseudo_huber_dist(std::span<const float> v);
double pseudo_huber_dist(std::span<const double> v);
// Per-row distance of an N x C tensor, N x 1.
template <typename Real>
BasicTensor<Real> pseudo_huber_dist(const BasicTensor<Real>& x);

// -log_sigmoid(-s) * e^s / t.
double log_barrier_term(double s, double t);
template <typename Real>
BasicTensor<Real> log_barrier_term(const BasicTensor<Real>& s, double t);

// Single hypersphere log-barrier OCC loss: mean_i barrier(D_i - R).
template <typename Real>
BasicTensor<Real> log_barrier_occ_loss(const BasicTensor<Real>& distances, double radius, double t);

// mean_i [barrier(D_i - R_max) + barrier(R_min - D_i)]. Throws on empty input.
template <typename Real>
BasicTensor<Real> bi_occ_loss(const BasicTensor<Real>& distances, const HypersphereConfig& cfg);

// mean_j ||psi(x_j) - x_j||_2; zero (untracked) when there are no rows.
template <typename Real>
BasicTensor<Real> invariance_term(const BasicTensor<Real>& abnormal_residuals,
                                  const BasicTensor<Real>& abnormal_constrained);

template <typename Real>
BasicTensor<Real> ai_occ_loss(const BasicTensor<Real>& normal_distances,
                              const BasicTensor<Real>& abnormal_residuals,
                              const BasicTensor<Real>& abnormal_constrained, const HypersphereConfig& cfg);

// R_max = min(max_j Dis(x_j, 0), 0.4), R_min = 0.99 R_max; R_max = 0.4 when
// there are no abnormal features. t and lambda are left at `base`'s values.
HypersphereConfig dynamic_radii(std::span<const double> abnormal_distances,
                                const HypersphereConfig& base = {});

// lambda / 2 * sum_k ||W_k||_F^2.
template <typename Real>
BasicTensor<Real> weight_regularizer(const std::vector<BasicTensor<Real>>& weights, double lambda);

struct SoapBubbleResult {
  double threshold = 0.0;           // sqrt(d - 2 sqrt(d t))
  double bound = 0.0;               // 1 - e^-t
  double empirical_fraction = 0.0;  // share of samples with ||z|| >= threshold
  bool passed = false;              // fraction >= bound - 3 binomial standard errors
};

// Monte-Carlo check of the Gaussian shell concentration bound
// P[||z|| >= sqrt(d - 2 sqrt(d t))] >= 1 - e^-t for z ~ N(0, I_d).
SoapBubbleResult soap_bubble_check(std::size_t dim, double t, std::size_t n_samples, std::uint64_t seed = 42);

}  // namespace resad
