#include "resad/vq_fdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "resad/errors.hpp"

namespace resad {

template <typename Real>
Quantized quantize_rows(std::span<const float> x, const BasicTensor<Real>& embeddings) {
  if (embeddings.numel() == 0) throw ContractError("quantize against an empty codebook");
  const std::size_t k = embeddings.rows();
  const std::size_t c = embeddings.cols();
  if (x.size() != c) {
    throw DimensionError("feature has " + std::to_string(x.size()) + " channels, codebook has " +
                         std::to_string(c));
  }
  const auto e = embeddings.data();
  Quantized best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t r = 0; r < k; ++r) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = static_cast<double>(x[j]) - static_cast<double>(e[r * c + j]);
      d2 += d * d;
    }
    if (d2 < best.distance) {
      best.distance = d2;
      best.index = r;
    }
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

template Quantized quantize_rows(std::span<const float>, const BasicTensor<float>&);
template Quantized quantize_rows(std::span<const float>, const BasicTensor<double>&);

Quantized quantize(std::span<const float> x, const Codebook& codebook) {
  return quantize_rows(x, codebook.embeddings);
}

Codebook init_codebook(std::size_t k, const FeatureMatrix& samples, Rng& rng) {
  if (k == 0) throw ContractError("codebook size must be positive");
  if (samples.rows == 0) throw ContractError("codebook initialization needs at least one sample");
  std::vector<std::size_t> pick;
  if (samples.rows >= k) {
    pick = rng.sample_without_replacement(samples.rows, k);
  } else {
    pick.resize(k);
    for (auto& p : pick) p = rng.index(samples.rows);
  }
  std::vector<float> values(k * samples.cols);
  for (std::size_t i = 0; i < k; ++i) {
    const auto row = samples.row(pick[i]);
    std::copy(row.begin(), row.end(), values.begin() + static_cast<std::ptrdiff_t>(i * samples.cols));
  }
  return Codebook{Tensor(Shape{k, samples.cols}, std::move(values), true)};
}

template <typename Real>
BasicTensor<Real> vq_loss(const BasicTensor<Real>& x, const BasicTensor<Real>& embeddings, double beta) {
  if (x.numel() == 0) throw ContractError("vq_loss over an empty batch");
  if (x.cols() != embeddings.cols()) throw DimensionError("feature and codebook widths differ");
  const std::size_t n = x.rows();
  const std::size_t c = x.cols();
  std::vector<std::size_t> nearest(n);
  std::vector<float> row(c);
  const auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) row[j] = static_cast<float>(xd[i * c + j]);
    nearest[i] = quantize_rows(std::span<const float>(row), embeddings).index;
  }
  const auto xq = gather_rows(embeddings, std::span<const std::size_t>(nearest));
  const auto commit = xq.detach() - x;
  const auto codebook = xq - x.detach();
  return mean(row_sum(commit * commit)) + mean(row_sum(codebook * codebook)) * beta;
}

template BasicTensor<float> vq_loss(const BasicTensor<float>&, const BasicTensor<float>&, double);
template BasicTensor<double> vq_loss(const BasicTensor<double>&, const BasicTensor<double>&, double);

std::vector<float> efdm_match(std::span<const float> q, std::span<const float> p, double alpha) {
  if (q.size() != p.size()) {
    throw DimensionError("EFDM needs equal sizes, got " + std::to_string(q.size()) + " and " +
                         std::to_string(p.size()));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("alpha must lie in [0, 1]");
  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });
  std::vector<float> p_sorted(p.begin(), p.end());
  std::sort(p_sorted.begin(), p_sorted.end());
  std::vector<float> out(q.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t pos = order[i];
    out[pos] = static_cast<float>(alpha * q[pos] + (1.0 - alpha) * p_sorted[i]);
  }
  return out;
}

FeatureMatrix fdm_apply(const FeatureMatrix& map, const Codebook& codebook, double alpha) {
  if (codebook.size() == 0) throw ContractError("FDM needs a non-empty codebook");
  if (map.cols != codebook.dim()) throw DimensionError("map and codebook widths differ");
  FeatureMatrix p(map.rows, map.cols);
  const auto e = codebook.embeddings.data();
  for (std::size_t i = 0; i < map.rows; ++i) {
    const std::size_t k = quantize(map.row(i), codebook).index;
    std::copy_n(e.begin() + static_cast<std::ptrdiff_t>(k * map.cols), map.cols, p.row(i).begin());
  }
  FeatureMatrix out(map.rows, map.cols);
  out.values = efdm_match(map.values, p.values, alpha);
  return out;
}

}  // namespace resad
