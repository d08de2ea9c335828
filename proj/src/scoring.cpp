#include "resad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "resad/bytes.hpp"
#include "resad/errors.hpp"
#include "resad/feature_store.hpp"

namespace resad {

double likelihood_score(double lp_normal, double reference) { return -std::expm1(lp_normal - reference); }

Grid upsample_bilinear(const Grid& grid, std::size_t height, std::size_t width) {
  if (grid.height == 0 || grid.width == 0) throw ContractError("cannot upsample an empty grid");
  if (height < grid.height || width < grid.width) {
    throw ContractError("upsample target " + std::to_string(height) + "x" + std::to_string(width) +
                        " is smaller than the source");
  }
  Grid out(height, width);
  const auto coord = [](std::size_t i, std::size_t src, std::size_t dst) {
    return dst > 1 ? static_cast<double>(i) * static_cast<double>(src - 1) / static_cast<double>(dst - 1) : 0.0;
  };
  for (std::size_t r = 0; r < height; ++r) {
    const double y = coord(r, grid.height, height);
    const auto y0 = static_cast<std::size_t>(std::floor(y));
    const std::size_t y1 = std::min(y0 + 1, grid.height - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < width; ++c) {
      const double x = coord(c, grid.width, width);
      const auto x0 = static_cast<std::size_t>(std::floor(x));
      const std::size_t x1 = std::min(x0 + 1, grid.width - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = (1.0 - fx) * grid.at(y0, x0) + fx * grid.at(y0, x1);
      const double bottom = (1.0 - fx) * grid.at(y1, x0) + fx * grid.at(y1, x1);
      out.at(r, c) = (1.0 - fy) * top + fy * bottom;
    }
  }
  return out;
}

namespace {
Grid layer_mean(std::span<const Grid> maps) {
  Grid out(maps[0].height, maps[0].width);
  for (const auto& g : maps) {
    if (g.height != out.height || g.width != out.width) throw DimensionError("score maps differ in size");
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += g.values[i];
  }
  for (auto& v : out.values) v /= static_cast<double>(maps.size());
  return out;
}
}  // namespace

ScoreMap merge_maps(std::span<const Grid> likelihood, std::span<const Grid> classification, bool use_mac) {
  if (likelihood.empty()) throw ContractError("merge_maps needs at least one layer");
  ScoreMap out;
  out.grid = layer_mean(likelihood);
  if (use_mac) {
    if (classification.size() != likelihood.size()) {
      throw ContractError("classification maps must cover the same layers");
    }
    const Grid cls = layer_mean(classification);
    if (cls.height != out.grid.height || cls.width != out.grid.width) {
      throw DimensionError("score maps differ in size");
    }
    for (std::size_t i = 0; i < out.grid.values.size(); ++i) {
      out.grid.values[i] = 0.5 * (out.grid.values[i] + cls.values[i]);
    }
  }
  out.image_score = *std::max_element(out.grid.values.begin(), out.grid.values.end());
  return out;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the Mann-Whitney U, kept integral.
  std::uint64_t twice_u = 0, n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t p = 0, q = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? p : q) += 1;
      ++j;
    }
    twice_u += p * (2 * n_neg + q);
    n_pos += p;
    n_neg += q;
    i = j;
  }
  if (n_pos == 0 || n_neg == 0) throw DegenerateError("AUROC needs both positive and negative labels");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

Components connected_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
  if (mask.size() != height * width) throw DimensionError("mask size does not match its extents");
  Components out;
  out.label.assign(mask.size(), -1);
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || out.label[start] >= 0) continue;
    const int id = static_cast<int>(out.count++);
    out.label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const auto r = static_cast<std::ptrdiff_t>(p / width);
      const auto c = static_cast<std::ptrdiff_t>(p % width);
      for (std::ptrdiff_t dr = -1; dr <= 1; ++dr) {
        for (std::ptrdiff_t dc = -1; dc <= 1; ++dc) {
          const std::ptrdiff_t rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(height) ||
              cc >= static_cast<std::ptrdiff_t>(width)) {
            continue;
          }
          const auto q = static_cast<std::size_t>(rr) * width + static_cast<std::size_t>(cc);
          if (mask[q] && out.label[q] < 0) {
            out.label[q] = id;
            stack.push_back(q);
          }
        }
      }
    }
  }
  return out;
}

std::vector<double> pro_thresholds(std::span<const Grid> maps, std::size_t n_thresholds) {
  if (n_thresholds < 2) throw ContractError("PRO needs at least 2 thresholds");
  std::vector<double> pooled;
  for (const auto& g : maps) pooled.insert(pooled.end(), g.values.begin(), g.values.end());
  if (pooled.empty()) throw ContractError("PRO over empty score maps");
  std::sort(pooled.begin(), pooled.end());
  const double last = static_cast<double>(pooled.size() - 1);
  std::vector<double> th;
  for (std::size_t i = 0; i < n_thresholds; ++i) {
    const auto k = static_cast<std::size_t>(std::lround(static_cast<double>(i) * last / (n_thresholds - 1)));
    th.push_back(pooled[k]);
  }
  std::sort(th.begin(), th.end(), std::greater<>());
  th.erase(std::unique(th.begin(), th.end()), th.end());
  return th;
}

std::vector<ProPoint> pro_curve(std::span<const Grid> maps, std::span<const std::vector<std::uint8_t>> masks,
                                std::span<const double> thresholds) {
  if (maps.size() != masks.size()) throw DimensionError("score maps and masks differ in count");
  std::vector<double> normal_scores;
  std::vector<std::vector<double>> component_scores;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const Grid& g = maps[i];
    if (masks[i].size() != g.values.size()) throw DimensionError("mask does not match its score map");
    const Components cc = connected_components(masks[i], g.height, g.width);
    const std::size_t base = component_scores.size();
    component_scores.resize(base + cc.count);
    for (std::size_t p = 0; p < g.values.size(); ++p) {
      if (cc.label[p] >= 0) {
        component_scores[base + static_cast<std::size_t>(cc.label[p])].push_back(g.values[p]);
      } else {
        normal_scores.push_back(g.values[p]);
      }
    }
  }
  if (component_scores.empty()) throw ContractError("PRO needs at least one anomalous component");
  if (normal_scores.empty()) throw ContractError("PRO needs normal pixels to measure false positives");
  std::sort(normal_scores.begin(), normal_scores.end());
  for (auto& s : component_scores) std::sort(s.begin(), s.end());

  const auto count_at_least = [](const std::vector<double>& sorted, double th) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), th));
  };
  std::vector<ProPoint> curve{{0.0, 0.0}};
  for (double th : thresholds) {
    ProPoint pt;
    pt.fpr = count_at_least(normal_scores, th) / static_cast<double>(normal_scores.size());
    double overlap = 0.0;
    for (const auto& s : component_scores) overlap += count_at_least(s, th) / static_cast<double>(s.size());
    pt.pro = overlap / static_cast<double>(component_scores.size());
    curve.push_back(pt);
  }
  std::sort(curve.begin(), curve.end(), [](const ProPoint& a, const ProPoint& b) {
    return a.fpr < b.fpr || (a.fpr == b.fpr && a.pro < b.pro);
  });
  return curve;
}

double integrate_pro(std::span<const ProPoint> curve, double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ContractError("FPR cap must lie in (0, 1]");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const ProPoint a = curve[i - 1];
    ProPoint b = curve[i];
    if (a.fpr >= fpr_cap) break;
    if (b.fpr > fpr_cap) {
      const double w = (fpr_cap - a.fpr) / (b.fpr - a.fpr);
      b = {fpr_cap, a.pro + w * (b.pro - a.pro)};
    }
    area += 0.5 * (b.fpr - a.fpr) * (a.pro + b.pro);
  }
  return area / fpr_cap;
}

double pro_at_fpr(std::span<const Grid> maps, std::span<const std::vector<std::uint8_t>> masks, double fpr_cap,
                  std::size_t n_thresholds) {
  const auto th = pro_thresholds(maps, n_thresholds);
  const auto curve = pro_curve(maps, masks, th);
  return integrate_pro(curve, fpr_cap);
}

std::string MetricReport::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "image_auroc = %.6f\npixel_auroc = %.6f\npro_03 = %.6f\n", image_auroc,
                pixel_auroc, pro_03);
  return buf;
}

namespace {
constexpr char kMapMagic[4] = {'R', 'S', 'S', 'M'};
constexpr std::uint32_t kMapVersion = 1;
}  // namespace

void write_score_maps(const std::filesystem::path& path, std::span<const ScoreMap> maps) {
  ByteWriter w;
  w.bytes({reinterpret_cast<const std::uint8_t*>(kMapMagic), 4});
  w.u32(kMapVersion);
  const std::size_t h = maps.empty() ? 0 : maps[0].grid.height;
  const std::size_t wd = maps.empty() ? 0 : maps[0].grid.width;
  w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(wd));
  w.u32(static_cast<std::uint32_t>(maps.size()));
  for (const auto& m : maps) {
    if (m.grid.height != h || m.grid.width != wd) throw DimensionError("score maps differ in size");
    for (double v : m.grid.values) w.f32(static_cast<float>(v));
  }
  const auto bytes = w.take();
  write_file_bytes(path, bytes);
}

std::vector<Grid> read_score_maps(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kMapMagic)) throw FormatError("not a score-map file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kMapVersion) throw FormatError("unsupported score-map version " + std::to_string(version));
  const std::uint32_t h = r.u32(), w = r.u32(), n = r.u32();
  std::vector<Grid> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    Grid g(h, w);
    for (auto& v : g.values) v = r.f32();
    out.push_back(std::move(g));
  }
  if (r.remaining() != 0) throw ValidationError("trailing bytes after score maps");
  return out;
}

}  // namespace resad
