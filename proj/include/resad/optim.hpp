#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "resad/tensor.hpp"

namespace resad {

struct AdamOptions {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;
};

// First/second moments of one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

// One Adam update of `param` in place. Weight decay is decoupled: the
// parameter first shrinks by lr * weight_decay * param, then the
// bias-corrected moment step is applied. `step` is the 1-based update count.
void adam_update(std::span<float> param, std::span<const float> grad, AdamMoments& moments,
                 std::size_t step, const AdamOptions& options);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // Applies one update from the gradients currently accumulated on the
  // parameters, then increments the step counter.
  void step();
  void zero_grad();

  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }
  std::size_t step_count() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<AdamMoments> moments_;
  AdamOptions options_;
  std::size_t step_ = 0;
};

// Piecewise-constant step decay: initial * factor^(milestones passed).
// A milestone m counts as passed from epoch m onward.
struct LrSchedule {
  double initial = 1e-5;
  double factor = 0.1;
  std::vector<std::size_t> milestones{70, 90};

  double lr_at(std::size_t epoch) const;
};

}  // namespace resad
