#pragma once
//
// Reference implementations used by the tests. Each one is written the slow,
// obvious way and shares no code with the library beyond plain data types.
//

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

// Central differences of f at x, every coordinate.
template <typename F>
std::vector<double> central_diff(F&& f, std::vector<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double norm_relative_error(const std::vector<double>& got, const std::vector<double>& want) {
  double d = 0.0, r = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) {
    d += (got[i] - want[i]) * (got[i] - want[i]);
    r += want[i] * want[i];
  }
  return std::sqrt(d) / std::max(std::sqrt(r), 1e-8);
}

inline std::vector<double> gaussian(std::size_t n, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(gen);
  return v;
}

// Lowest-index row of `rows` (n x d, row-major) closest to q.
inline std::size_t nearest_row(const std::vector<float>& rows, std::size_t d, const std::vector<float>& q) {
  std::size_t best = 0;
  long double best_d = -1.0L;
  for (std::size_t r = 0; r * d < rows.size(); ++r) {
    long double s = 0.0L;
    for (std::size_t k = 0; k < d; ++k) {
      const long double diff = static_cast<long double>(rows[r * d + k]) - q[k];
      s += diff * diff;
    }
    if (best_d < 0.0L || s < best_d) {
      best_d = s;
      best = r;
    }
  }
  return best;
}

// Fraction of (positive, negative) pairs ordered correctly, ties half.
inline double pair_auroc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Rank-wise blend: the i-th smallest of q (stable) moves toward the i-th smallest of p.
inline std::vector<float> sort_and_scatter(const std::vector<float>& q, const std::vector<float>& p, double alpha) {
  std::vector<std::pair<float, std::size_t>> tagged;
  for (std::size_t i = 0; i < q.size(); ++i) tagged.emplace_back(q[i], i);
  std::stable_sort(tagged.begin(), tagged.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<float> ps = p;
  std::sort(ps.begin(), ps.end());
  std::vector<float> out(q.size());
  for (std::size_t i = 0; i < tagged.size(); ++i) {
    out[tagged[i].second] = static_cast<float>(alpha * tagged[i].first + (1.0 - alpha) * ps[i]);
  }
  return out;
}

// log|det A| by Gaussian elimination with partial pivoting.
inline double log_abs_det(std::vector<double> a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r * n + c]) > std::fabs(a[piv * n + c])) piv = r;
    }
    if (piv != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
    }
    const double d = a[c * n + c];
    acc += std::log(std::fabs(d));
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / d;
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
    }
  }
  return acc;
}

// Union-find labelling of 8-connected foreground pixels; -1 for background.
inline std::vector<int> label_components(const std::vector<std::uint8_t>& m, std::size_t h, std::size_t w,
                                         int* count) {
  std::vector<std::size_t> parent(m.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!m[r * w + c]) continue;
      for (std::size_t rr = r; rr < std::min(h, r + 2); ++rr) {
        for (std::size_t cc = c > 0 ? c - 1 : 0; cc < std::min(w, c + 2); ++cc) {
          if (m[rr * w + cc]) parent[find(rr * w + cc)] = find(r * w + c);
        }
      }
    }
  }
  std::vector<int> label(m.size(), -1), id(m.size(), -1);
  int n = 0;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p]) continue;
    const std::size_t root = find(p);
    if (id[root] < 0) id[root] = n++;
    label[p] = id[root];
  }
  *count = n;
  return label;
}

// Per-region overlap averaged over all components vs per-pixel FPR, with
// every distinct score as a threshold, trapezoids up to the cap.
inline double brute_pro(const std::vector<std::vector<double>>& maps,
                        const std::vector<std::vector<std::uint8_t>>& masks, std::size_t h, std::size_t w,
                        double cap) {
  std::vector<double> all;
  for (const auto& m : maps) all.insert(all.end(), m.begin(), m.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  std::vector<std::vector<int>> labels;
  std::vector<int> counts;
  for (const auto& m : masks) {
    int n = 0;
    labels.push_back(label_components(m, h, w, &n));
    counts.push_back(n);
  }
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (double th : all) {
    double fp = 0.0, neg = 0.0, overlap_sum = 0.0;
    int regions = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
      std::vector<double> hit(counts[i], 0.0), size(counts[i], 0.0);
      for (std::size_t p = 0; p < h * w; ++p) {
        const bool on = maps[i][p] >= th;
        if (labels[i][p] < 0) {
          neg += 1.0;
          fp += on;
        } else {
          size[labels[i][p]] += 1.0;
          hit[labels[i][p]] += on;
        }
      }
      for (int k = 0; k < counts[i]; ++k) overlap_sum += hit[k] / size[k];
      regions += counts[i];
    }
    pts.emplace_back(fp / neg, overlap_sum / regions);
  }
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auto [x0, y0] = pts[i - 1];
    auto [x1, y1] = pts[i];
    if (x0 >= cap) break;
    if (x1 > cap) {
      y1 = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
      x1 = cap;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  return area / cap;
}

}  // namespace oracle
