#pragma once
//
// Gradient comparison harness shared by the unit and acceptance tests:
// autodiff through the f32 tape against oracle::central_diff over the f64
// forward of the same loss.
//

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "resad/tensor.hpp"

namespace testing_support {

template <typename F>
std::vector<double> taped_gradient(F&& loss, const std::vector<resad::Shape>& shapes,
                                   const std::vector<double>& flat) {
  std::vector<resad::Tensor> params;
  std::size_t off = 0;
  for (const auto& s : shapes) {
    const std::size_t n = resad::shape_numel(s);
    params.emplace_back(s, std::vector<float>(flat.begin() + off, flat.begin() + off + n), true);
    off += n;
  }
  resad::Tape tape;
  {
    resad::TapeScope scope(tape);
    const resad::Tensor l = loss(params);
    tape.backward(l);
  }
  std::vector<double> g;
  for (const auto& p : params) g.insert(g.end(), p.grad().begin(), p.grad().end());
  return g;
}

template <typename F>
double loss64(F&& loss, const std::vector<resad::Shape>& shapes, const std::vector<double>& flat) {
  std::vector<resad::Tensor64> params;
  std::size_t off = 0;
  for (const auto& s : shapes) {
    const std::size_t n = resad::shape_numel(s);
    params.emplace_back(s, std::vector<double>(flat.begin() + off, flat.begin() + off + n));
    off += n;
  }
  return loss(params).item();
}

// Worst norm-wise relative error over `points` random parameter draws.
template <typename F>
double worst_gradient_error(F&& loss, const std::vector<resad::Shape>& shapes, std::size_t points,
                            std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 gen(seed);
  std::size_t total = 0;
  for (const auto& s : shapes) total += resad::shape_numel(s);
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    // Round through f32 so both sides see the same parameter values.
    std::vector<double> flat = oracle::gaussian(total, gen, scale);
    for (auto& v : flat) v = static_cast<float>(v);
    const auto ad = taped_gradient(loss, shapes, flat);
    const auto fd = oracle::central_diff([&](const std::vector<double>& x) { return loss64(loss, shapes, x); }, flat);
    worst = std::max(worst, oracle::norm_relative_error(ad, fd));
  }
  return worst;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;
  explicit ScratchDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("resad_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace testing_support
