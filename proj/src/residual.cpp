#include "resad/residual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "resad/errors.hpp"

namespace resad {

NearestMatch nearest_reference(std::span<const float> query, const FeatureMatrix& pool_layer) {
  if (pool_layer.rows == 0) throw ContractError("nearest_reference on an empty pool");
  if (query.size() != pool_layer.cols) {
    throw DimensionError("query has " + std::to_string(query.size()) + " channels, pool has " +
                         std::to_string(pool_layer.cols));
  }
  NearestMatch best{0, std::numeric_limits<double>::infinity()};
  const std::size_t c = pool_layer.cols;
  for (std::size_t r = 0; r < pool_layer.rows; ++r) {
    const float* ref = pool_layer.values.data() + r * c;
    double d2 = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = static_cast<double>(query[j]) - ref[j];
      d2 += d * d;
    }
    if (d2 < best.distance) {
      best.distance = d2;
      best.row = r;
    }
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

FeatureMatrix to_residual_layer(const FeatureMatrix& features, const FeatureMatrix& pool_layer,
                                std::vector<std::size_t>* matched_rows) {
  if (features.cols != pool_layer.cols) throw DimensionError("feature and pool channel counts differ");
  FeatureMatrix out(features.rows, features.cols);
  if (matched_rows) matched_rows->assign(features.rows, 0);
  for (std::size_t p = 0; p < features.rows; ++p) {
    const auto q = features.row(p);
    const NearestMatch m = nearest_reference(q, pool_layer);
    const auto ref = pool_layer.row(m.row);
    auto dst = out.row(p);
    for (std::size_t j = 0; j < features.cols; ++j) dst[j] = q[j] - ref[j];
    if (matched_rows) (*matched_rows)[p] = m.row;
  }
  return out;
}

ResidualMap to_residual(std::span<const FeatureMatrix> features, const ReferencePool& pool) {
  if (features.size() != pool.layers.size()) {
    throw DimensionError("feature map has " + std::to_string(features.size()) + " layers, pool has " +
                         std::to_string(pool.layers.size()));
  }
  ResidualMap out;
  out.layers.reserve(features.size());
  out.matched_rows.resize(features.size());
  for (std::size_t l = 0; l < features.size(); ++l) {
    out.layers.push_back(to_residual_layer(features[l], pool.layers[l], &out.matched_rows[l]));
  }
  return out;
}

double excess_kurtosis(std::span<const double> samples) {
  if (samples.size() < 4) throw ContractError("kurtosis needs at least 4 samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double x : samples) mean += x;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double x : samples) {
    const double d = x - mean;
    const double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (!(m2 > 0.0)) throw DegenerateError("kurtosis of a zero-variance sample");
  return m4 / (m2 * m2) - 3.0;
}

DecorrelationStats decorrelation_report(const DecorrelationInput& input) {
  if (input.dataset == nullptr) throw ContractError("decorrelation_report needs a dataset");
  const FeatureDataset& ds = *input.dataset;
  if (input.use_residual && input.pools == nullptr) {
    throw ContractError("residual statistics need per-class reference pools");
  }
  const std::set<std::size_t> excluded(input.exclude.begin(), input.exclude.end());
  const std::vector<std::uint32_t> classes = class_ids(ds);
  if (classes.empty()) throw ContractError("decorrelation_report on an empty dataset");

  const std::size_t n_layers = ds.layers.size();
  // Normal-position samples per (layer, channel), pooled across classes.
  std::vector<std::vector<std::vector<double>>> channel_samples(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) channel_samples[l].resize(ds.layers[l].channels);
  double abs_n = 0.0, abs_a = 0.0;
  std::size_t cnt_n = 0, cnt_a = 0;
  // Per layer, per class: (sum of norms, count) at normal positions.
  std::vector<std::map<std::uint32_t, std::pair<double, std::size_t>>> norms(n_layers);

  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    if (excluded.count(i)) continue;
    const ImageRecord& im = ds.images[i];
    const ReferencePool* pool = nullptr;
    if (input.use_residual) {
      auto it = input.pools->find(im.class_id);
      if (it == input.pools->end()) {
        throw ContractError("no reference pool for class " + std::to_string(im.class_id));
      }
      pool = &it->second;
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
      const LayerSpec& spec = ds.layers[l];
      FeatureMatrix feats = pool ? to_residual_layer(im.features[l], pool->layers[l]) : im.features[l];
      if (input.transform) feats = input.transform(l, feats);
      const auto labels = downsample_mask(im.mask, ds.image_height, ds.image_width, spec.height, spec.width);
      auto& per_class = norms[l][im.class_id];
      for (std::size_t p = 0; p < feats.rows; ++p) {
        const auto row = feats.row(p);
        double sq = 0.0, a = 0.0;
        for (std::size_t c = 0; c < feats.cols; ++c) {
          sq += static_cast<double>(row[c]) * row[c];
          a += std::fabs(row[c]);
        }
        if (labels[p]) {
          abs_a += a;
          cnt_a += feats.cols;
        } else {
          abs_n += a;
          cnt_n += feats.cols;
          per_class.first += std::sqrt(sq);
          per_class.second += 1;
          for (std::size_t c = 0; c < feats.cols; ++c) channel_samples[l][c].push_back(row[c]);
        }
      }
    }
  }

  DecorrelationStats st;
  st.abs_normal = cnt_n ? abs_n / static_cast<double>(cnt_n) : 0.0;
  st.abs_abnormal = cnt_a ? abs_a / static_cast<double>(cnt_a) : 0.0;

  double kurt_sum = 0.0;
  std::size_t kurt_cnt = 0;
  for (const auto& layer : channel_samples) {
    for (const auto& samples : layer) {
      try {
        kurt_sum += excess_kurtosis(samples);
        ++kurt_cnt;
      } catch (const DegenerateError&) {
        // constant channel: no shape to measure
      } catch (const ContractError&) {
        // fewer than 4 normal samples
      }
    }
  }
  if (kurt_cnt == 0) throw DegenerateError("no channel with enough non-constant normal samples");
  st.kurtosis = kurt_sum / static_cast<double>(kurt_cnt);

  double std_sum = 0.0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    std::vector<double> class_means;
    for (std::uint32_t k : classes) {
      auto it = norms[l].find(k);
      if (it == norms[l].end() || it->second.second == 0) {
        throw ContractError("class " + std::to_string(k) + " has no normal samples");
      }
      class_means.push_back(it->second.first / static_cast<double>(it->second.second));
    }
    double mu = 0.0;
    for (double m : class_means) mu += m;
    mu /= static_cast<double>(class_means.size());
    double var = 0.0;
    for (double m : class_means) var += (m - mu) * (m - mu);
    std_sum += std::sqrt(var / static_cast<double>(class_means.size()));
  }
  st.scale_std = std_sum / static_cast<double>(n_layers);
  return st;
}

}  // namespace resad
