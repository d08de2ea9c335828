#include <cmath>
#include <cstring>
#include <fstream>

#include "doctest.h"
#include "resad/errors.hpp"
#include "resad/feature_store.hpp"
#include "support.hpp"

using namespace resad;

namespace {

FeatureDataset tiny_dataset() {
  FeatureDataset d;
  d.image_height = 4;
  d.image_width = 4;
  d.layers = {{2, 2, 3}, {1, 1, 2}};
  for (std::uint8_t lab : {0, 1}) {
    ImageRecord im;
    im.class_id = 7;
    im.label = lab;
    im.mask.assign(16, 0);
    if (lab) im.mask[5] = 1;
    FeatureMatrix a(4, 3), b(1, 2);
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] = 0.25f * static_cast<float>(i) - lab;
    b.values = {1.5f, -2.0f};
    im.features = {a, b};
    d.images.push_back(im);
  }
  return d;
}

}  // namespace

TEST_SUITE("feature_store") {

TEST_CASE("serialization round-trips exactly and deterministically") {
  const FeatureDataset d = tiny_dataset();
  const auto bytes = serialize_dataset(d);
  CHECK(parse_dataset(bytes) == d);
  CHECK(serialize_dataset(d) == bytes);
  CHECK(std::memcmp(bytes.data(), "RSFD", 4) == 0);

  testing_support::ScratchDir dir("fs");
  write_dataset(d, dir / "a.rsfd");
  write_dataset(d, dir / "b.rsfd");
  CHECK(read_file_bytes(dir / "a.rsfd") == read_file_bytes(dir / "b.rsfd"));
  CHECK(read_dataset(dir / "a.rsfd") == d);
}

TEST_CASE("empty image list is a valid file") {
  FeatureDataset d = tiny_dataset();
  d.images.clear();
  const auto bytes = serialize_dataset(d);
  // header: magic, version, H0, W0, L, 2 layer triples, n_images
  CHECK(bytes.size() == 4 + 4 * 4 + 2 * 12 + 4);
  CHECK(parse_dataset(bytes).images.empty());
}

TEST_CASE("malformed files are rejected") {
  const FeatureDataset d = tiny_dataset();
  auto bytes = serialize_dataset(d);

  auto bad_magic = bytes;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK_THROWS_AS(parse_dataset(bad_magic), FormatError);

  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(parse_dataset(bad_version), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(parse_dataset(trailing), ValidationError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS(parse_dataset(truncated));

  CHECK_THROWS_AS(read_dataset("/nonexistent/dir/x.rsfd"), IoError);
}

TEST_CASE("a file with fewer feature blocks than layers is a validation error") {
  FeatureDataset d = tiny_dataset();
  d.images.resize(1);
  auto bytes = serialize_dataset(d);
  bytes.resize(bytes.size() - 2 * 4);  // drop the last layer's 1x1x2 block
  CHECK_THROWS_AS(parse_dataset(bytes), ValidationError);
}

TEST_CASE("validation names the offending image") {
  FeatureDataset d = tiny_dataset();
  d.images[1].mask.assign(16, 0);  // label 1 with an empty mask
  try {
    d.validate();
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("image 1") != std::string::npos);
  }
  FeatureDataset n = tiny_dataset();
  n.images[0].features[0].values[0] = std::nanf("");
  CHECK_THROWS_AS(n.validate(), ValidationError);
}

TEST_CASE("reference pools enumerate every position") {
  FeatureDataset d;
  d.image_height = 7;
  d.image_width = 7;
  d.layers = {{7, 7, 64}};
  for (int i = 0; i < 3; ++i) {
    ImageRecord im;
    im.mask.assign(49, 0);
    FeatureMatrix f(49, 64);
    for (auto& v : f.values) v = static_cast<float>(i);
    im.features = {f};
    d.images.push_back(im);
  }
  d.images[2].label = 1;
  d.images[2].mask[0] = 1;
  const std::vector<std::size_t> idx{0, 1};
  const ReferencePool pool = build_reference_pool(d, idx);
  CHECK(pool.layers[0].rows == 98);
  CHECK(pool.layers[0].cols == 64);
  // Image order: first 49 rows from image 0 (constant 0), then image 1.
  CHECK(pool.layers[0].row(0)[5] == 0.0f);
  CHECK(pool.layers[0].row(48)[63] == 0.0f);
  CHECK(pool.layers[0].row(49)[0] == 1.0f);

  const std::vector<std::size_t> abnormal{2}, dup{0, 0};
  CHECK_THROWS_AS(build_reference_pool(d, abnormal), ContractError);
  CHECK_THROWS_AS(build_reference_pool(d, dup), ContractError);
  CHECK_THROWS_AS(build_reference_pool(d, {}), ContractError);
}

TEST_CASE("mask downsampling is a block max") {
  std::vector<std::uint8_t> m(16, 0);
  CHECK(downsample_mask(m, 4, 4, 2, 2) == std::vector<std::uint8_t>{0, 0, 0, 0});
  m[0] = 1;
  CHECK(downsample_mask(m, 4, 4, 2, 2) == std::vector<std::uint8_t>{1, 0, 0, 0});
  m[15] = 1;
  CHECK(downsample_mask(m, 4, 4, 2, 2) == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(downsample_mask(std::vector<std::uint8_t>(16, 1), 4, 4, 2, 2) == std::vector<std::uint8_t>(4, 1));
  CHECK_THROWS_AS(downsample_mask(m, 4, 4, 8, 8), ContractError);

  // Monotone: adding ones never clears an output cell.
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> a(64);
    for (auto& v : a) v = gen() % 7 == 0;
    auto b = a;
    b[gen() % 64] = 1;
    const auto da = downsample_mask(a, 8, 8, 4, 4), db = downsample_mask(b, 8, 8, 4, 4);
    for (std::size_t i = 0; i < da.size(); ++i) CHECK(db[i] >= da[i]);
  }
}

TEST_CASE("synthetic generator") {
  SynthSpec s;
  s.images_per_class = 10;
  s.anomaly_fraction = 0.0;
  const FeatureDataset clean = synth_dataset(s);
  CHECK(clean.images.size() == 20);
  for (const auto& im : clean.images) {
    CHECK(im.label == 0);
    CHECK(std::count(im.mask.begin(), im.mask.end(), 1) == 0);
  }
  s.anomaly_fraction = 0.2;
  const FeatureDataset a = synth_dataset(s), b = synth_dataset(s);
  CHECK(a == b);
  CHECK_NOTHROW(a.validate());
  std::size_t abnormal = 0;
  for (const auto& im : a.images) abnormal += im.label;
  CHECK(abnormal == 4);
  CHECK(images_of_class(a, 1).size() == 10);
  CHECK(class_ids(a) == std::vector<std::uint32_t>{0, 1});

  s.split = 1;
  CHECK(!(synth_dataset(s) == a));

  SynthSpec bad = s;
  bad.anomaly_fraction = 1.0;
  CHECK_THROWS_AS(synth_dataset(bad), ContractError);
}

TEST_CASE("zero separation leaves class means statistically indistinguishable") {
  SynthSpec s;
  s.class_separation = 0.0;
  s.anomaly_fraction = 0.0;
  s.images_per_class = 50;
  s.layers = {{4, 4, 8}};
  const FeatureDataset d = synth_dataset(s);
  // Two-sample z statistic of each channel's class means.
  for (std::size_t c = 0; c < 8; ++c) {
    double sum[2] = {0, 0}, sq[2] = {0, 0}, n[2] = {0, 0};
    for (const auto& im : d.images) {
      for (std::size_t p = 0; p < im.features[0].rows; ++p) {
        const double v = im.features[0].row(p)[c];
        sum[im.class_id] += v;
        sq[im.class_id] += v * v;
        n[im.class_id] += 1;
      }
    }
    double se2 = 0.0;
    for (int k = 0; k < 2; ++k) {
      const double m = sum[k] / n[k];
      se2 += (sq[k] / n[k] - m * m) / n[k];
    }
    CHECK(std::fabs(sum[0] / n[0] - sum[1] / n[1]) < 4.0 * std::sqrt(se2));
  }
}

}  // TEST_SUITE
