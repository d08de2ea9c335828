#pragma once
//
// Multi-layer feature datasets: the RSFD binary format, few-shot reference
// pools, mask downsampling and a synthetic multi-class generator.
//
// RSFD layout (little-endian):
//   "RSFD" | u32 version=1 | u32 H0 | u32 W0 | u32 L | L x (u32 H, u32 W, u32 C)
//   u32 n_images | per image: u32 class_id, u8 label, H0*W0 bytes mask,
//   then per layer H*W*C f32 (row-major, channel fastest).
//

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace resad {

struct LayerSpec {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;

  std::size_t positions() const { return std::size_t{height} * width; }
  bool operator==(const LayerSpec&) const = default;
};

// Row-major rows x cols matrix of f32; one row per spatial position.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  bool operator==(const FeatureMatrix&) const = default;
};

struct ImageRecord {
  std::uint32_t class_id = 0;
  std::uint8_t label = 0;             // 0 normal, 1 abnormal
  std::vector<std::uint8_t> mask;     // H0 * W0, values 0/1
  std::vector<FeatureMatrix> features;  // one H_l*W_l x C_l matrix per layer

  bool operator==(const ImageRecord&) const = default;
};

struct FeatureDataset {
  std::uint32_t image_height = 0;
  std::uint32_t image_width = 0;
  std::vector<LayerSpec> layers;
  std::vector<ImageRecord> images;

  // Throws ValidationError naming the offending image on any violation.
  void validate() const;
  std::size_t layer_count() const { return layers.size(); }
  bool operator==(const FeatureDataset&) const = default;
};

// Per-layer flat matrix of normal reference vectors.
struct ReferencePool {
  std::vector<FeatureMatrix> layers;
  std::vector<std::size_t> image_indices;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> serialize_dataset(const FeatureDataset& dataset);
FeatureDataset parse_dataset(std::span<const std::uint8_t> bytes);

FeatureDataset read_dataset(const std::filesystem::path& path);
void write_dataset(const FeatureDataset& dataset, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Every per-position vector of the referenced images, in (image, row, column)
// order. Indices must be distinct, in range and point at label-0 images.
ReferencePool build_reference_pool(const FeatureDataset& dataset,
                                   std::span<const std::size_t> image_indices);

// Max-pool of a binary mask over the block partition of the source grid.
std::vector<std::uint8_t> downsample_mask(std::span<const std::uint8_t> mask, std::size_t src_h,
                                          std::size_t src_w, std::size_t dst_h, std::size_t dst_w);

struct SynthSpec {
  std::uint32_t n_classes = 2;
  std::uint32_t first_class_id = 0;
  std::uint32_t images_per_class = 100;
  double anomaly_fraction = 0.2;
  std::uint32_t image_height = 16;
  std::uint32_t image_width = 16;
  std::vector<LayerSpec> layers{{8, 8, 8}, {4, 4, 16}};
  double class_separation = 5.0;
  double anomaly_magnitude = 3.0;
  std::uint64_t seed = 42;
  // Selects an independent image sample of the same classes (train/test splits).
  std::uint32_t split = 0;
};

// Class k draws normal features as mu_k + sigma_k * eps per position, with
// ||mu_k|| = class_separation and class-specific channel scales. Class
// parameters depend only on (seed, class id); images on (seed, class id, split).
// Abnormal images are a fresh normal draw plus a per-position perturbation of
// norm anomaly_magnitude over a block aligned to the coarsest layer's grid;
// the mask marks exactly that block.
FeatureDataset synth_dataset(const SynthSpec& spec);

// Indices of the images with a given class id, in dataset order.
std::vector<std::size_t> images_of_class(const FeatureDataset& dataset, std::uint32_t class_id);
std::vector<std::uint32_t> class_ids(const FeatureDataset& dataset);

}  // namespace resad
