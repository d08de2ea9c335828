#pragma once
//
// Residual features: every position's feature minus its exact nearest
// neighbor (Euclidean, ties to the lowest row) in the reference pool, plus the
// decorrelation statistics used to compare feature spaces across classes.
//

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "resad/feature_store.hpp"

namespace resad {

struct NearestMatch {
  std::size_t row = 0;
  double distance = 0.0;
};

// Exhaustive scan with 64-bit distances.
NearestMatch nearest_reference(std::span<const float> query, const FeatureMatrix& pool_layer);

struct ResidualMap {
  std::vector<FeatureMatrix> layers;
  std::vector<std::vector<std::size_t>> matched_rows;  // per layer, per position
};

ResidualMap to_residual(std::span<const FeatureMatrix> features, const ReferencePool& pool);
FeatureMatrix to_residual_layer(const FeatureMatrix& features, const FeatureMatrix& pool_layer,
                                std::vector<std::size_t>* matched_rows = nullptr);

// Population excess kurtosis m4 / m2^2 - 3. Needs >= 4 samples and nonzero
// variance (DegenerateError otherwise).
double excess_kurtosis(std::span<const double> samples);

struct DecorrelationStats {
  double kurtosis = 0.0;
  double abs_normal = 0.0;
  double abs_abnormal = 0.0;
  double scale_std = 0.0;
};

// Optional per-layer map applied to residual (or initial) features before the
// statistics are taken, e.g. a trained constraintor.
using FeatureTransform = std::function<FeatureMatrix(std::size_t layer, const FeatureMatrix&)>;

struct DecorrelationInput {
  const FeatureDataset* dataset = nullptr;
  // Per-class reference pools; required when use_residual is set.
  const std::map<std::uint32_t, ReferencePool>* pools = nullptr;
  bool use_residual = true;
  // Images left out of the statistics (typically the reference images).
  std::vector<std::size_t> exclude;
  FeatureTransform transform;
};

// kurtosis: excess kurtosis per (layer, channel) over the normal positions of
//   all classes, averaged over every (layer, channel) pair.
// abs_normal / abs_abnormal: mean |component| over normal / abnormal
//   positions, labels taken from masks max-pooled to each layer's grid.
// scale_std: per layer, population std over classes of each class's mean L2
//   norm at normal positions; averaged over layers.
DecorrelationStats decorrelation_report(const DecorrelationInput& input);

}  // namespace resad
