#include "resad/optim.hpp"

#include <cmath>

#include "resad/errors.hpp"

namespace resad {

void adam_update(std::span<float> param, std::span<const float> grad, AdamMoments& moments,
                 std::size_t step, const AdamOptions& options) {
  if (param.size() != grad.size()) throw DimensionError("adam: gradient size differs from parameter");
  if (step == 0) throw ContractError("adam: step count is 1-based");
  if (moments.m.size() != param.size()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    double p = param[i];
    const double g = grad[i];
    p -= options.lr * options.weight_decay * p;
    moments.m[i] = options.beta1 * moments.m[i] + (1.0 - options.beta1) * g;
    moments.v[i] = options.beta2 * moments.v[i] + (1.0 - options.beta2) * g * g;
    const double m_hat = moments.m[i] / bc1;
    const double v_hat = moments.v[i] / bc2;
    p -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
    param[i] = static_cast<float>(p);
  }
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), moments_(params_.size()), options_(options) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    moments_[i].m.assign(params_[i].numel(), 0.0);
    moments_[i].v.assign(params_[i].numel(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adam_update(params_[i].mutable_data(), params_[i].grad(), moments_[i], step_, options_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double LrSchedule::lr_at(std::size_t epoch) const {
  double lr = initial;
  for (std::size_t m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace resad
