#include "resad/feature_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "resad/bytes.hpp"
#include "resad/errors.hpp"
#include "resad/rng.hpp"

namespace resad {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'F', 'D'};

std::size_t layer_bytes(const LayerSpec& l) { return l.positions() * l.channels * 4; }

}  // namespace

void FeatureDataset::validate() const {
  if (layers.empty()) throw ValidationError("dataset declares no feature layers");
  if (image_height == 0 || image_width == 0) throw ValidationError("image size must be positive");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& s = layers[l];
    if (s.height == 0 || s.width == 0 || s.channels == 0) {
      throw ValidationError("layer " + std::to_string(l) + " has a zero extent");
    }
  }
  const std::size_t mask_size = std::size_t{image_height} * image_width;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    const std::string where = "image " + std::to_string(i) + ": ";
    if (im.label > 1) throw ValidationError(where + "label must be 0 or 1");
    if (im.mask.size() != mask_size) throw ValidationError(where + "mask size mismatch");
    bool any = false;
    for (auto m : im.mask) {
      if (m > 1) throw ValidationError(where + "mask values must be 0 or 1");
      any = any || m == 1;
    }
    if (any != (im.label == 1)) {
      throw ValidationError(where + "label " + std::to_string(im.label) +
                            (any ? " but mask has anomalous pixels" : " but mask is empty"));
    }
    if (im.features.size() != layers.size()) {
      throw ValidationError(where + "carries " + std::to_string(im.features.size()) +
                            " feature maps, dataset declares " + std::to_string(layers.size()));
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& f = im.features[l];
      if (f.rows != layers[l].positions() || f.cols != layers[l].channels ||
          f.values.size() != f.rows * f.cols) {
        throw ValidationError(where + "layer " + std::to_string(l) + " shape mismatch");
      }
      for (float v : f.values) {
        if (!std::isfinite(v)) throw ValidationError(where + "non-finite feature value");
      }
    }
  }
}

std::vector<std::uint8_t> serialize_dataset(const FeatureDataset& ds) {
  ByteWriter w;
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kDatasetVersion);
  w.u32(ds.image_height);
  w.u32(ds.image_width);
  w.u32(static_cast<std::uint32_t>(ds.layers.size()));
  for (const auto& l : ds.layers) {
    w.u32(l.height);
    w.u32(l.width);
    w.u32(l.channels);
  }
  w.u32(static_cast<std::uint32_t>(ds.images.size()));
  for (const auto& im : ds.images) {
    w.u32(im.class_id);
    w.u8(im.label);
    w.bytes(im.mask);
    for (const auto& f : im.features)
      for (float v : f.values) w.f32(v);
  }
  return w.take();
}

FeatureDataset parse_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a feature dataset (bad magic)");
  }
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw FormatError("unsupported dataset version " + std::to_string(version));

  FeatureDataset ds;
  ds.image_height = r.u32();
  ds.image_width = r.u32();
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0) throw ValidationError("dataset declares no feature layers");
  if (std::size_t{n_layers} * 12 > r.remaining()) throw IoError("truncated layer table");
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    LayerSpec s;
    s.height = r.u32();
    s.width = r.u32();
    s.channels = r.u32();
    ds.layers.push_back(s);
  }
  const std::uint32_t n_images = r.u32();

  // Size the payload from the header before touching it, so a missing layer
  // block is reported as a structural mismatch instead of a misparse.
  const std::size_t head = 4 + 1 + std::size_t{ds.image_height} * ds.image_width;
  std::size_t per_image = head;
  for (const auto& l : ds.layers) per_image += layer_bytes(l);
  const std::size_t expected = per_image * n_images;
  if (r.remaining() > expected) {
    throw ValidationError("trailing bytes: payload has " + std::to_string(r.remaining()) +
                          " bytes, header declares " + std::to_string(expected));
  }
  if (r.remaining() < expected) {
    std::size_t partial = head;
    for (std::size_t k = 0; k + 1 < ds.layers.size(); ++k) {
      partial += layer_bytes(ds.layers[k]);
      if (partial * n_images == r.remaining()) {
        throw ValidationError("image 0: carries " + std::to_string(k + 1) +
                              " feature blocks, header declares " + std::to_string(n_layers));
      }
    }
    throw IoError("truncated payload at byte offset " + std::to_string(bytes.size()) + ": expected " +
                  std::to_string(expected) + " payload bytes, found " + std::to_string(r.remaining()));
  }

  ds.images.resize(n_images);
  for (auto& im : ds.images) {
    im.class_id = r.u32();
    im.label = r.u8();
    auto m = r.bytes(std::size_t{ds.image_height} * ds.image_width);
    im.mask.assign(m.begin(), m.end());
    for (const auto& l : ds.layers) {
      FeatureMatrix f(l.positions(), l.channels);
      for (auto& v : f.values) v = r.f32();
      im.features.push_back(std::move(f));
    }
  }
  ds.validate();
  return ds;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

FeatureDataset read_dataset(const std::filesystem::path& path) { return parse_dataset(read_file_bytes(path)); }

void write_dataset(const FeatureDataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_dataset(dataset));
}

ReferencePool build_reference_pool(const FeatureDataset& dataset, std::span<const std::size_t> image_indices) {
  if (image_indices.empty()) throw ContractError("reference pool needs at least one image");
  std::set<std::size_t> seen;
  for (std::size_t i : image_indices) {
    if (i >= dataset.images.size()) throw ContractError("reference index " + std::to_string(i) + " out of range");
    if (dataset.images[i].label != 0) {
      throw ContractError("reference image " + std::to_string(i) + " is abnormal");
    }
    if (!seen.insert(i).second) throw ContractError("duplicate reference index " + std::to_string(i));
  }
  ReferencePool pool;
  pool.image_indices.assign(image_indices.begin(), image_indices.end());
  for (std::size_t l = 0; l < dataset.layers.size(); ++l) {
    const auto& spec = dataset.layers[l];
    FeatureMatrix m;
    m.rows = image_indices.size() * spec.positions();
    m.cols = spec.channels;
    m.values.reserve(m.rows * m.cols);
    for (std::size_t i : image_indices) {
      const auto& f = dataset.images[i].features[l].values;
      m.values.insert(m.values.end(), f.begin(), f.end());
    }
    pool.layers.push_back(std::move(m));
  }
  return pool;
}

std::vector<std::uint8_t> downsample_mask(std::span<const std::uint8_t> mask, std::size_t src_h,
                                          std::size_t src_w, std::size_t dst_h, std::size_t dst_w) {
  if (mask.size() != src_h * src_w) throw DimensionError("mask size does not match its extents");
  if (dst_h == 0 || dst_w == 0 || dst_h > src_h || dst_w > src_w) {
    throw ContractError("downsample target must be non-empty and no larger than the source");
  }
  std::vector<std::uint8_t> out(dst_h * dst_w, 0);
  for (std::size_t i = 0; i < dst_h; ++i) {
    const std::size_t y0 = i * src_h / dst_h, y1 = (i + 1) * src_h / dst_h;
    for (std::size_t j = 0; j < dst_w; ++j) {
      const std::size_t x0 = j * src_w / dst_w, x1 = (j + 1) * src_w / dst_w;
      std::uint8_t v = 0;
      for (std::size_t y = y0; y < y1 && !v; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          if (mask[y * src_w + x]) {
            v = 1;
            break;
          }
      out[i * dst_w + j] = v;
    }
  }
  return out;
}

namespace {

struct ClassParams {
  std::vector<std::vector<double>> mean;   // per layer, C_l
  std::vector<std::vector<double>> scale;  // per layer, C_l
};

ClassParams draw_class(const SynthSpec& spec, std::uint32_t class_id) {
  Rng rng(mix_seed(spec.seed, class_id, 0xC1A55ULL));
  ClassParams p;
  const double base_scale = rng.uniform(0.2, 0.4);
  for (const auto& l : spec.layers) {
    std::vector<double> dir(l.channels);
    double norm = 0.0;
    for (auto& d : dir) {
      d = rng.normal();
      norm += d * d;
    }
    norm = std::sqrt(norm);
    for (auto& d : dir) d = spec.class_separation * d / norm;
    std::vector<double> scale(l.channels);
    for (auto& s : scale) s = base_scale * rng.uniform(0.75, 1.25);
    p.mean.push_back(std::move(dir));
    p.scale.push_back(std::move(scale));
  }
  return p;
}

ImageRecord draw_normal(const SynthSpec& spec, const ClassParams& p, std::uint32_t class_id, Rng& rng) {
  ImageRecord im;
  im.class_id = class_id;
  im.label = 0;
  im.mask.assign(std::size_t{spec.image_height} * spec.image_width, 0);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& s = spec.layers[l];
    FeatureMatrix f(s.positions(), s.channels);
    for (std::size_t r = 0; r < f.rows; ++r) {
      auto row = f.row(r);
      for (std::size_t c = 0; c < f.cols; ++c) {
        row[c] = static_cast<float>(p.mean[l][c] + p.scale[l][c] * rng.normal());
      }
    }
    im.features.push_back(std::move(f));
  }
  return im;
}

void plant_anomaly(const SynthSpec& spec, ImageRecord& im, Rng& rng) {
  std::size_t coarse_h = spec.image_height, coarse_w = spec.image_width;
  for (const auto& l : spec.layers) {
    coarse_h = std::min<std::size_t>(coarse_h, l.height);
    coarse_w = std::min<std::size_t>(coarse_w, l.width);
  }
  const std::size_t cell_h = spec.image_height / coarse_h, cell_w = spec.image_width / coarse_w;
  const std::size_t max_bh = std::max<std::size_t>(1, (coarse_h + 1) / 2);
  const std::size_t max_bw = std::max<std::size_t>(1, (coarse_w + 1) / 2);
  const std::size_t bh = 1 + rng.index(max_bh), bw = 1 + rng.index(max_bw);
  const std::size_t by = rng.index(coarse_h - bh + 1), bx = rng.index(coarse_w - bw + 1);
  // Pixel-space block [y0, y1) x [x0, x1).
  const std::size_t y0 = by * cell_h, y1 = (by + bh) * cell_h;
  const std::size_t x0 = bx * cell_w, x1 = (bx + bw) * cell_w;

  im.label = 1;
  for (std::size_t y = y0; y < y1; ++y)
    for (std::size_t x = x0; x < x1; ++x) im.mask[y * spec.image_width + x] = 1;

  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const auto& s = spec.layers[l];
    const std::size_t ph = spec.image_height / s.height, pw = spec.image_width / s.width;
    auto& f = im.features[l];
    for (std::size_t h = y0 / ph; h < y1 / ph; ++h) {
      for (std::size_t w = x0 / pw; w < x1 / pw; ++w) {
        std::vector<double> dir(s.channels);
        double norm = 0.0;
        for (auto& d : dir) {
          d = rng.normal();
          norm += d * d;
        }
        norm = std::sqrt(norm);
        auto row = f.row(h * s.width + w);
        for (std::size_t c = 0; c < s.channels; ++c) {
          row[c] += static_cast<float>(spec.anomaly_magnitude * dir[c] / norm);
        }
      }
    }
  }
}

}  // namespace

FeatureDataset synth_dataset(const SynthSpec& spec) {
  if (spec.n_classes == 0 || spec.images_per_class == 0) throw ContractError("synth counts must be positive");
  if (!(spec.anomaly_fraction >= 0.0 && spec.anomaly_fraction < 1.0)) {
    throw ContractError("anomaly_fraction must lie in [0, 1)");
  }
  if (spec.layers.empty()) throw ContractError("synth needs at least one layer");
  for (const auto& l : spec.layers) {
    if (l.height == 0 || l.width == 0 || l.channels == 0 || spec.image_height % l.height != 0 ||
        spec.image_width % l.width != 0) {
      throw ContractError("synth layer grids must evenly divide the image size");
    }
  }
  FeatureDataset ds;
  ds.image_height = spec.image_height;
  ds.image_width = spec.image_width;
  ds.layers = spec.layers;

  const auto n_abnormal = static_cast<std::uint32_t>(std::lround(spec.anomaly_fraction * spec.images_per_class));
  for (std::uint32_t k = 0; k < spec.n_classes; ++k) {
    const std::uint32_t class_id = spec.first_class_id + k;
    const ClassParams params = draw_class(spec, class_id);
    Rng rng(mix_seed(spec.seed, class_id, std::uint64_t{spec.split} + 1));
    for (std::uint32_t i = 0; i < spec.images_per_class; ++i) {
      ImageRecord im = draw_normal(spec, params, class_id, rng);
      if (i >= spec.images_per_class - n_abnormal) plant_anomaly(spec, im, rng);
      ds.images.push_back(std::move(im));
    }
  }
  return ds;
}

std::vector<std::size_t> images_of_class(const FeatureDataset& dataset, std::uint32_t class_id) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < dataset.images.size(); ++i)
    if (dataset.images[i].class_id == class_id) out.push_back(i);
  return out;
}

std::vector<std::uint32_t> class_ids(const FeatureDataset& dataset) {
  std::set<std::uint32_t> ids;
  for (const auto& im : dataset.images) ids.insert(im.class_id);
  return {ids.begin(), ids.end()};
}

}  // namespace resad
