#pragma once
//
// Vector-quantized codebook of normal residual features and the exact feature
// distribution matching (EFDM) step applied to test residual maps.
//

#include <cstddef>
#include <span>
#include <vector>

#include "resad/feature_store.hpp"
#include "resad/rng.hpp"
#include "resad/tensor.hpp"

namespace resad {

struct Codebook {
  Tensor embeddings;  // K x C, trainable

  std::size_t size() const { return embeddings.numel() ? embeddings.rows() : 0; }
  std::size_t dim() const { return embeddings.numel() ? embeddings.cols() : 0; }
};

struct FdmConfig {
  double alpha = 0.4;
  double beta = 0.25;
  std::size_t codebook_size = 1536;
};

struct Quantized {
  std::size_t index = 0;
  double distance = 0.0;  // Euclidean
};

// Nearest embedding by exhaustive scan; ties go to the lowest index.
Quantized quantize(std::span<const float> x, const Codebook& codebook);
template <typename Real>
Quantized quantize_rows(std::span<const float> x, const BasicTensor<Real>& embeddings);

// K rows drawn (seeded) from `samples`; without replacement when there are
// at least K rows, with replacement otherwise.
Codebook init_codebook(std::size_t k, const FeatureMatrix& samples, Rng& rng);

// mean_i ||sg[x_q] - x_i||^2 + beta ||x_q - sg[x_i]||^2 over the rows of x.
// Gradients reach `embeddings` only through the second term.
template <typename Real>
BasicTensor<Real> vq_loss(const BasicTensor<Real>& x, const BasicTensor<Real>& embeddings, double beta);

// Rank-wise replacement: the element of q with ascending rank i becomes
// alpha * q + (1 - alpha) * (i-th smallest of p), kept at its position.
// Equal values keep their original order (stable ranks).
std::vector<float> efdm_match(std::span<const float> q, std::span<const float> p, double alpha);

// Quantizes every position, then matches the whole flattened layer map.
FeatureMatrix fdm_apply(const FeatureMatrix& map, const Codebook& codebook, double alpha);

}  // namespace resad
