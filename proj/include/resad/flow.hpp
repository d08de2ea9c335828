#pragma once
//
// Per-layer Real-NVP density estimator. Each coupling block splits the
// channels into a conditioning half x1 (first C/2) and a passive half x2,
// maps x1 through a two-layer MLP to scale logits s and shifts t, sets
// y2 = x2 * exp(clamp(s)) + t, then applies a fixed channel permutation and a
// fixed per-channel scaling. Two Gaussian bases: N(0, I) for normal features
// and N(a * 1, I) for abnormal ones.
//

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resad/rng.hpp"
#include "resad/tensor.hpp"

namespace resad {

template <typename Real>
struct CouplingBlock {
  BasicTensor<Real> w1;  // len1 x hidden
  BasicTensor<Real> b1;  // 1 x hidden
  BasicTensor<Real> w2;  // hidden x 2 * len2 (scale logits, then shifts)
  BasicTensor<Real> b2;  // 1 x 2 * len2
  std::vector<std::size_t> permutation;  // out[:, j] = in[:, permutation[j]]
  std::vector<double> fixed_scale;       // per output channel, frozen
};

template <typename Real>
struct FlowOutput {
  BasicTensor<Real> z;        // N x C
  BasicTensor<Real> log_det;  // N x 1
};

inline constexpr double kDefaultClamp = 1.9;
inline constexpr std::size_t kDefaultCouplingBlocks = 10;

template <typename Real>
struct FlowLayer {
  std::size_t channels = 0;
  double clamp = kDefaultClamp;
  std::vector<CouplingBlock<Real>> blocks;

  // Hidden width 2C; first layer uniform fan-in, output layer zero so every
  // block starts as a pure permutation.
  static FlowLayer init(std::size_t channels, std::size_t n_blocks, double clamp, Rng& rng);

  std::size_t len1() const { return channels / 2; }
  std::size_t len2() const { return channels - channels / 2; }

  FlowOutput<Real> forward(const BasicTensor<Real>& x) const;
  // Inverse map; log_det is that of the inverse (the negated forward value).
  FlowOutput<Real> inverse(const BasicTensor<Real>& z) const;

  std::vector<BasicTensor<Real>> parameters() const;
};

template <typename To, typename From>
FlowLayer<To> cast_flow(const FlowLayer<From>& src) {
  FlowLayer<To> out;
  out.channels = src.channels;
  out.clamp = src.clamp;
  auto conv = [](const BasicTensor<From>& t) {
    auto c = cast<To>(t);
    c.set_requires_grad(t.requires_grad());
    return c;
  };
  for (const auto& b : src.blocks) {
    out.blocks.push_back({conv(b.w1), conv(b.b1), conv(b.w2), conv(b.b2), b.permutation, b.fixed_scale});
  }
  return out;
}

enum class Base { kNormal, kAbnormal };

double soft_clamp(double s, double c);
template <typename Real>
BasicTensor<Real> soft_clamp(const BasicTensor<Real>& s, double c);

// -(C/2) log 2pi - 1/2 ||z - mu||^2 + log_det per row, mu = 0 or a * 1. N x 1.
template <typename Real>
BasicTensor<Real> log_prob(const BasicTensor<Real>& z, const BasicTensor<Real>& log_det, Base base, double a);
double log_prob(std::span<const double> z, double log_det, Base base, double a);

// -mean_i [(1 - y_i) log p_n + y_i log p_a]; lp_* are N x 1.
template <typename Real>
BasicTensor<Real> ml_loss(const BasicTensor<Real>& lp_normal, const BasicTensor<Real>& lp_abnormal,
                          std::span<const std::uint8_t> labels);

// sigmoid(lp_a - lp_n).
double classification_score(double lp_normal, double lp_abnormal);

// mean_i -(1 - p_t)^gamma log p_t with p_t = s (y = 1) or 1 - s (y = 0).
// Scores must lie in (0, 1).
template <typename Real>
BasicTensor<Real> focal_loss(const BasicTensor<Real>& scores, std::span<const std::uint8_t> labels, double gamma);
// Same loss from logits d = lp_a - lp_n, evaluated through log-sigmoids so it
// stays finite for saturated scores.
template <typename Real>
BasicTensor<Real> focal_loss_from_logits(const BasicTensor<Real>& logits, std::span<const std::uint8_t> labels,
                                         double gamma);

inline constexpr double kFocalGamma = 2.0;

// ml_loss + focal loss on the same batch.
template <typename Real>
BasicTensor<Real> nf_total_loss(const FlowOutput<Real>& out, std::span<const std::uint8_t> labels, double a,
                                double gamma = kFocalGamma);

}  // namespace resad
