#include <cmath>

#include "doctest.h"
#include "resad/errors.hpp"
#include "resad/residual.hpp"
#include "support.hpp"

using namespace resad;

namespace {

FeatureMatrix matrix(std::size_t r, std::size_t c, std::vector<float> v) {
  FeatureMatrix m(r, c);
  m.values = std::move(v);
  return m;
}

FeatureMatrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& gen) {
  const auto v = oracle::gaussian(r * c, gen);
  return matrix(r, c, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

TEST_SUITE("residual") {

TEST_CASE("nearest reference examples") {
  const FeatureMatrix pool = matrix(2, 2, {1, 0, 0, 2});
  const std::vector<float> q0{1, 0}, q1{0.4f, 0.1f};
  CHECK(nearest_reference(q0, pool).row == 0);
  CHECK(nearest_reference(q0, pool).distance == 0.0);
  const NearestMatch m = nearest_reference(q1, pool);
  CHECK(m.row == 0);
  CHECK(m.distance == doctest::Approx(std::sqrt(0.36 + 0.01)).epsilon(1e-6));

  const FeatureMatrix twins = matrix(2, 2, {1, 1, 1, 1});
  CHECK(nearest_reference(q1, twins).row == 0);

  const std::vector<float> wrong{1, 2, 3};
  CHECK_THROWS_AS(nearest_reference(wrong, pool), DimensionError);
  CHECK_THROWS_AS(nearest_reference(q0, FeatureMatrix(0, 2)), ContractError);
}

TEST_CASE("nearest reference agrees with an exhaustive scan") {
  std::mt19937_64 gen(17);
  const FeatureMatrix pool = random_matrix(1000, 6, gen);
  for (int k = 0; k < 300; ++k) {
    const auto q = oracle::gaussian(6, gen);
    const std::vector<float> qf(q.begin(), q.end());
    CHECK(nearest_reference(qf, pool).row == oracle::nearest_row(pool.values, 6, qf));
  }
}

TEST_CASE("to_residual subtracts the nearest row") {
  std::mt19937_64 gen(23);
  const FeatureMatrix feats = random_matrix(4, 4, gen);  // a 2x2x4 map
  const FeatureMatrix pool = random_matrix(3, 4, gen);
  std::vector<std::size_t> matched;
  const FeatureMatrix res = to_residual_layer(feats, pool, &matched);
  for (std::size_t p = 0; p < 4; ++p) {
    const std::vector<float> q(feats.row(p).begin(), feats.row(p).end());
    const std::size_t r = oracle::nearest_row(pool.values, 4, q);
    CHECK(matched[p] == r);
    for (std::size_t c = 0; c < 4; ++c) CHECK(res.row(p)[c] == feats.row(p)[c] - pool.row(r)[c]);
    // Minimality against every pool row.
    double own = 0.0;
    for (std::size_t c = 0; c < 4; ++c) own += double(res.row(p)[c]) * res.row(p)[c];
    for (std::size_t j = 0; j < 3; ++j) {
      double other = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        const double d = double(feats.row(p)[c]) - pool.row(j)[c];
        other += d * d;
      }
      CHECK(own <= other * (1 + 1e-6));  // own is rounded through f32
    }
  }

  // Self-match gives zeros; a single-row pool forces the match.
  const FeatureMatrix self = to_residual_layer(feats, feats);
  for (float v : self.values) CHECK(v == 0.0f);
  const FeatureMatrix one = matrix(1, 4, {1, 2, 3, 4});
  const FeatureMatrix forced = to_residual_layer(feats, one);
  for (std::size_t p = 0; p < 4; ++p) {
    for (std::size_t c = 0; c < 4; ++c) CHECK(forced.row(p)[c] == feats.row(p)[c] - one.row(0)[c]);
  }
}

TEST_CASE("residuals permute with their queries") {
  std::mt19937_64 gen(29);
  const FeatureMatrix feats = random_matrix(5, 3, gen), pool = random_matrix(7, 3, gen);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  FeatureMatrix shuffled(5, 3);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) shuffled.row(i)[c] = feats.row(perm[i])[c];
  }
  const FeatureMatrix a = to_residual_layer(feats, pool), b = to_residual_layer(shuffled, pool);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t c = 0; c < 3; ++c) CHECK(b.row(i)[c] == a.row(perm[i])[c]);
  }
}

TEST_CASE("excess kurtosis") {
  const std::vector<double> s{0, 0, 0, 0, 1};
  // m2 = 0.16, m4 = 0.0832.
  CHECK(excess_kurtosis(s) == doctest::Approx(0.0832 / (0.16 * 0.16) - 3.0));
  CHECK(excess_kurtosis(s) == doctest::Approx(0.25));
  CHECK_THROWS_AS(excess_kurtosis(std::vector<double>(5, 2.0)), DegenerateError);
  std::mt19937_64 gen(31);
  CHECK(std::fabs(excess_kurtosis(oracle::gaussian(100000, gen))) < 0.1);
}

TEST_CASE("decorrelation statistics on synthetic data") {
  SynthSpec s;
  s.images_per_class = 40;
  const FeatureDataset d = synth_dataset(s);
  std::map<std::uint32_t, ReferencePool> pools;
  std::vector<std::size_t> exclude;
  for (std::uint32_t k : class_ids(d)) {
    std::vector<std::size_t> refs;
    for (std::size_t i : images_of_class(d, k)) {
      if (d.images[i].label == 0 && refs.size() < 4) refs.push_back(i);
    }
    pools[k] = build_reference_pool(d, refs);
    exclude.insert(exclude.end(), refs.begin(), refs.end());
  }
  DecorrelationInput in;
  in.dataset = &d;
  in.pools = &pools;
  in.exclude = exclude;
  in.use_residual = false;
  const DecorrelationStats initial = decorrelation_report(in);
  in.use_residual = true;
  const DecorrelationStats residual = decorrelation_report(in);
  CHECK(residual.kurtosis > initial.kurtosis);
  CHECK(residual.abs_abnormal > residual.abs_normal);
  CHECK(initial.scale_std >= 0.0);

  // One class alone has no spread of class scales.
  SynthSpec one = s;
  one.n_classes = 1;
  const FeatureDataset d1 = synth_dataset(one);
  DecorrelationInput in1;
  in1.dataset = &d1;
  in1.use_residual = false;
  CHECK(decorrelation_report(in1).scale_std == 0.0);
  in1.use_residual = true;
  CHECK_THROWS_AS(decorrelation_report(in1), ContractError);
}

}  // TEST_SUITE
