#include "resad/selfcheck.hpp"

#include <cmath>
#include <cstdio>

#include "resad/constraintor.hpp"
#include "resad/flow.hpp"
#include "resad/gradcheck.hpp"
#include "resad/rng.hpp"
#include "resad/scoring.hpp"
#include "resad/vq_fdm.hpp"

namespace resad {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::vector<double> random_values(std::size_t n, Rng& rng, double scale) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

CheckResult soap_bubble(std::size_t d) {
  const SoapBubbleResult r = soap_bubble_check(d, 4.0, 10000);
  return {"soap_bubble d=" + std::to_string(d), r.passed,
          fmt("empirical %.4f vs bound %.4f", r.empirical_fraction, r.bound)};
}

CheckResult barrier_gradient() {
  double worst = 0.0;
  double prev = -1.0;
  bool increasing = true;
  for (double s : {-5.0, -1.0, 0.0, 1.0, 5.0}) {
    Tensor64 x = Tensor64::scalar(s, true);
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(sum(log_barrier_term(x, 1.0)));
    }
    const double g = x.grad()[0];
    const double sig = 1.0 / (1.0 + std::exp(s));
    // e^s (1 - sigma) - log(sigma) e^s; the first term keeps its e^s factor.
    const double analytic = std::exp(s) * (1.0 - sig) - std::log(sig) * std::exp(s);
    worst = std::max(worst, std::fabs(g - analytic) / std::fabs(analytic));
    increasing = increasing && std::fabs(g) > prev;
    prev = std::fabs(g);
  }
  return {"barrier_gradient", worst <= 1e-6 && increasing, fmt("max relative error %.3g", worst)};
}

CheckResult occ_gradient() {
  Rng rng(7);
  const std::size_t c = 4, n = 6;
  const auto x = random_values(n * c, rng, 0.5);
  const auto loss = [&](auto& p) {
    using T = std::decay_t<decltype(p[0])>;
    using R = typename T::value_type;
    const T in(Shape{n, c}, std::vector<R>(x.begin(), x.end()));
    const auto h = relu(matmul(in, p[0]) + p[1]);
    const auto out = matmul(h, p[2]);
    const HypersphereConfig cfg{0.4, 0.396, 1.0, 0.001};
    return bi_occ_loss(pseudo_huber_dist(out), cfg) + weight_regularizer<R>({p[0], p[2]}, cfg.lambda);
  };
  const auto r = gradcheck(loss, {{c, c}, {1, c}, {c, c}},
                           {random_values(c * c, rng, 0.5), random_values(c, rng, 0.5), random_values(c * c, rng, 0.5)});
  return {"occ_gradient", r.relative_error <= 1e-3, fmt("relative error %.3g", r.relative_error)};
}

CheckResult flow_gradient() {
  Rng rng(11);
  const std::size_t c = 4, n = 5;
  FlowLayer<double> f = FlowLayer<double>::init(c, 2, kDefaultClamp, rng);
  const auto x = random_values(n * c, rng, 1.0);
  const std::vector<std::uint8_t> labels{0, 1, 0, 0, 1};
  std::vector<Shape> shapes;
  std::vector<std::vector<double>> values;
  for (const auto& p : f.parameters()) {
    shapes.push_back(p.shape());
    values.push_back(random_values(p.numel(), rng, 0.3));
  }
  const auto loss = [&](auto& p) {
    using T = std::decay_t<decltype(p[0])>;
    using R = typename T::value_type;
    FlowLayer<R> g = cast_flow<R>(f);
    for (std::size_t b = 0; b < g.blocks.size(); ++b) {
      g.blocks[b].w1 = p[4 * b];
      g.blocks[b].b1 = p[4 * b + 1];
      g.blocks[b].w2 = p[4 * b + 2];
      g.blocks[b].b2 = p[4 * b + 3];
    }
    const T in(Shape{n, c}, std::vector<R>(x.begin(), x.end()));
    return nf_total_loss(g.forward(in), labels, 1.0);
  };
  const auto r = gradcheck(loss, shapes, values);
  return {"flow_gradient", r.relative_error <= 1e-3, fmt("relative error %.3g", r.relative_error)};
}

CheckResult flow_inverse() {
  Rng rng(13);
  const std::size_t c = 6, n = 20;
  FlowLayer<float> f = FlowLayer<float>::init(c, kDefaultCouplingBlocks, kDefaultClamp, rng);
  for (auto& b : f.blocks) {
    for (auto& v : b.w2.mutable_data()) v = static_cast<float>(0.3 * rng.normal());
  }
  std::vector<float> x(n * c);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  const Tensor in(Shape{n, c}, x);
  const auto fwd = f.forward(in);
  const auto back = f.inverse(fwd.z);
  double worst = 0.0, ld = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(double(back.z.data()[i]) - x[i]));
  for (std::size_t i = 0; i < n; ++i) ld = std::max(ld, std::fabs(double(fwd.log_det.data()[i]) + back.log_det.data()[i]));
  return {"flow_inverse", worst < 1e-4 && ld < 1e-4, fmt("max |x - f^-1(f(x))| %.3g, log_det sum %.3g", worst, ld)};
}

CheckResult efdm_example() {
  const std::vector<float> q{3, 1, 2}, p{10, 20, 30};
  const auto out = efdm_match(q, p, 0.5);
  const bool ok = out == std::vector<float>{16.5f, 5.5f, 11.0f};
  return {"efdm_example", ok, "Q=[3,1,2], P=[10,20,30], alpha=0.5"};
}

CheckResult metrics_example() {
  const std::vector<double> s{0.9, 0.8, 0.1, 0.2};
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  const double a = auroc(s, y);
  Grid g(2, 2);
  g.values = {0, 1, 2, 3};
  const Grid up = upsample_bilinear(g, 3, 3);
  const bool ok = a == 1.0 && up.values == std::vector<double>{0, 0.5, 1, 1, 1.5, 2, 2, 2.5, 3};
  return {"metrics_example", ok, fmt("auroc %.3f", a)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
  return {soap_bubble(256), soap_bubble(1024), barrier_gradient(), occ_gradient(),
          flow_gradient(),  flow_inverse(),    efdm_example(),     metrics_example()};
}

}  // namespace resad
