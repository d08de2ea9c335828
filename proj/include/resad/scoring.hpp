#pragma once
//
// Per-position scores, upsampling and layer merging into full-resolution
// score maps, and the evaluation metrics (AUROC, PRO up to an FPR cap).
//
// RSSM score-map file (little-endian):
//   "RSSM" | u32 version=1 | u32 H0 | u32 W0 | u32 n_images | n_images x H0*W0 f32
//

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace resad {

struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major

  Grid() = default;
  Grid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}
  double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
};

// 1 - exp(log p_n - reference), via expm1. reference = 0 is the plain
// density score; a per-layer maximum maps every layer into [0, 1).
double likelihood_score(double lp_normal, double reference = 0.0);

// Corner-aligned: source corners land exactly on target corners.
Grid upsample_bilinear(const Grid& grid, std::size_t height, std::size_t width);

struct ScoreMap {
  Grid grid;
  double image_score = 0.0;  // max of grid
};

// Layer-mean likelihood map, averaged with the layer-mean classification map
// when use_mac is set. Maps must already share one resolution.
ScoreMap merge_maps(std::span<const Grid> likelihood, std::span<const Grid> classification, bool use_mac);

// Mann-Whitney AUROC, ties counted half. DegenerateError unless both labels occur.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct Components {
  std::size_t count = 0;
  std::vector<int> label;  // per pixel, -1 outside any component
};

// 8-connected components of the nonzero pixels.
Components connected_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width);

struct ProPoint {
  double fpr = 0.0;
  double pro = 0.0;
};

inline constexpr std::size_t kProThresholds = 200;
inline constexpr double kProFprCap = 0.3;

// sorted[round(i (n - 1) / (k - 1))] for i = 0..k-1 over the pooled scores,
// deduplicated, descending.
std::vector<double> pro_thresholds(std::span<const Grid> maps, std::size_t n_thresholds);

// One point per threshold (pixel positive when score >= threshold), plus the
// empty-detection point (0, 0). Sorted by (fpr, pro).
std::vector<ProPoint> pro_curve(std::span<const Grid> maps, std::span<const std::vector<std::uint8_t>> masks,
                                std::span<const double> thresholds);

// Trapezoid area under the curve up to fpr_cap (interpolated at the cap),
// divided by fpr_cap.
double integrate_pro(std::span<const ProPoint> curve, double fpr_cap);

double pro_at_fpr(std::span<const Grid> maps, std::span<const std::vector<std::uint8_t>> masks,
                  double fpr_cap = kProFprCap, std::size_t n_thresholds = kProThresholds);

struct MetricReport {
  double image_auroc = 0.0;
  double pixel_auroc = 0.0;
  double pro_03 = 0.0;

  std::string to_text() const;
  bool operator==(const MetricReport&) const = default;
};

void write_score_maps(const std::filesystem::path& path, std::span<const ScoreMap> maps);
std::vector<Grid> read_score_maps(const std::filesystem::path& path);

}  // namespace resad
