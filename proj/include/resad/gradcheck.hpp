#pragma once
//
// Autodiff-versus-finite-difference gradient comparison. The loss is a
// generic callable invoked both with float parameters (taped, differentiated)
// and with double parameters (central differences).
//

#include <cmath>
#include <vector>

#include "resad/tensor.hpp"

namespace resad {

struct GradCheckResult {
  double relative_error = 0.0;  // ||g_ad - g_fd|| / max(||g_fd||, 1e-8)
  double fd_norm = 0.0;
  std::vector<double> autodiff;
  std::vector<double> finite_difference;
};

template <typename F>
GradCheckResult gradcheck(F&& loss, const std::vector<Shape>& shapes, const std::vector<std::vector<double>>& values,
                          double step = 1e-4) {
  GradCheckResult res;
  std::vector<Tensor> pf;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    pf.emplace_back(shapes[i], std::vector<float>(values[i].begin(), values[i].end()), true);
  }
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor l = loss(pf);
    tape.backward(l);
  }
  for (const auto& p : pf) {
    for (float g : p.grad()) res.autodiff.push_back(g);
  }

  std::vector<Tensor64> pd;
  for (std::size_t i = 0; i < shapes.size(); ++i) pd.emplace_back(shapes[i], values[i], true);
  for (auto& p : pd) {
    auto data = p.mutable_data();
    for (std::size_t e = 0; e < data.size(); ++e) {
      const double orig = data[e];
      data[e] = orig + step;
      const double up = loss(pd).item();
      data[e] = orig - step;
      const double down = loss(pd).item();
      data[e] = orig;
      res.finite_difference.push_back((up - down) / (2.0 * step));
    }
  }
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < res.autodiff.size(); ++i) {
    const double d = res.autodiff[i] - res.finite_difference[i];
    diff += d * d;
    ref += res.finite_difference[i] * res.finite_difference[i];
  }
  res.fd_norm = std::sqrt(ref);
  res.relative_error = std::sqrt(diff) / std::max(res.fd_norm, 1e-8);
  return res;
}

}  // namespace resad
