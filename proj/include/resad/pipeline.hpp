#pragma once
//
// Training and evaluation of the full pipeline:
//   residual -> (FDM, test only) -> constraintor -> flow -> scores.
//
// Checkpoint layout (little-endian):
//   "RSCK" | u32 version=1 | u32 n + n bytes config text
//   u32 H0 | u32 W0 | u32 L | L x (u32 H, u32 W, u32 C)
//   per layer: constraintor blocks (conv_a_w, conv_a_b, gamma, beta, conv_b_w,
//   conv_b_b, running_mean, running_var), u32 n_blocks, per coupling block
//   (w1, b1, w2, b2, permutation, fixed_scale), codebook embeddings.
//   Every block is u32 element count followed by that many f32 values.
//

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <vector>

#include "resad/config.hpp"
#include "resad/constraintor.hpp"
#include "resad/feature_store.hpp"
#include "resad/flow.hpp"
#include "resad/residual.hpp"
#include "resad/scoring.hpp"
#include "resad/vq_fdm.hpp"

namespace resad {

struct Model {
  RunConfig config;
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  std::vector<LayerSpec> layers;
  std::vector<ConstraintorLayer<float>> constraintors;
  std::vector<FlowLayer<float>> flows;
  std::vector<Codebook> codebooks;

  // Freshly initialized parameters from config.seed.
  static Model init(const RunConfig& config, std::uint32_t image_height, std::uint32_t image_width,
                    std::span<const LayerSpec> layers);
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model& model);
Model parse_model(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

using PoolMap = std::map<std::uint32_t, ReferencePool>;
using ReferenceMap = std::map<std::uint32_t, std::vector<std::size_t>>;

// Seeded draw of n normal images per class; throws when a class has fewer.
ReferenceMap draw_references(const FeatureDataset& dataset, std::size_t n, std::uint64_t seed);
PoolMap build_pools(const FeatureDataset& dataset, const ReferenceMap& refs);
std::vector<std::size_t> flatten_references(const ReferenceMap& refs);

struct EpochLosses {
  std::size_t epoch = 0;  // 1-based
  double occ = 0.0;       // bi/ai contraction + regularizer
  double ml = 0.0;
  double focal = 0.0;
  double vq = 0.0;
  double total = 0.0;
};

struct TrainResult {
  Model model;
  ReferenceMap references;
  std::vector<EpochLosses> history;
};

// Per-epoch loss lines go to `log` when given.
TrainResult train(const FeatureDataset& dataset, const RunConfig& config, std::ostream* log = nullptr);

struct EvalResult {
  MetricReport report;
  std::vector<std::size_t> scored;  // dataset indices, ascending
  std::vector<ScoreMap> maps;       // parallel to `scored`
};

// `scored` empty means every image that is not a reference. Uses
// model.config for the pipeline switches.
EvalResult evaluate(const Model& model, const FeatureDataset& dataset, const ReferenceMap& refs,
                    std::vector<std::size_t> scored = {});

// Pipeline input of one image layer: residual (or raw) features with FDM
// applied when enabled.
FeatureMatrix prepare_layer(const Model& model, const FeatureMatrix& features, const ReferencePool* pool,
                            std::size_t layer, bool apply_fdm);
// Constraintor in evaluation mode (identity when disabled).
FeatureMatrix constrain_layer(const Model& model, const FeatureMatrix& features, std::size_t layer);

struct StatsReport {
  DecorrelationStats initial;
  DecorrelationStats residual;
  bool has_constrained = false;
  DecorrelationStats constrained;

  std::string to_text() const;
};

// Reference images are excluded from every statistic.
StatsReport decorrelation_stats(const FeatureDataset& dataset, const ReferenceMap& refs, const Model* model);

struct Manifest {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  ReferenceMap references;

  std::string to_text() const;
};

void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace resad
