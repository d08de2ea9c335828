#include <cmath>
#include <limits>

#include "doctest.h"
#include "resad/errors.hpp"
#include "resad/optim.hpp"
#include "resad/tensor.hpp"
#include "support.hpp"

using namespace resad;
using testing_support::worst_gradient_error;

namespace {

// Fixed projection so every op's output reaches the scalar loss with
// distinct weights.
template <typename T>
T project(const T& y) {
  using R = typename T::value_type;
  std::vector<R> w(y.numel());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<R>(0.3 + 0.17 * static_cast<double>(i % 7));
  return sum(y * T(y.shape(), w));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul of ones contracts to the inner extent") {
  const Tensor a = Tensor::full({2, 3}, 1.0f), b = Tensor::full({3, 2}, 1.0f);
  const Tensor c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 2});
  for (float v : c.data()) CHECK(v == 3.0f);
}

TEST_CASE("relu clips negatives") {
  const Tensor y = relu(Tensor({3}, {-1.0f, 0.0f, 2.0f}));
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{0, 0, 2});
}

TEST_CASE("batch norm of a constant channel is epsilon-stabilized to zero") {
  const Tensor x({3, 2}, {1, 5, 2, 5, 3, 5});
  const auto bn = batch_norm(x, Tensor::full({1, 2}, 1.0f), Tensor::zeros({1, 2}), 1e-5);
  for (std::size_t r = 0; r < 3; ++r) CHECK(bn.output.at(r, 1) == 0.0f);
  CHECK(bn.batch_var[1] == 0.0);
  CHECK(bn.batch_mean[0] == doctest::Approx(2.0));
}

TEST_CASE("shape and domain errors") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), DimensionError);
  CHECK_THROWS_AS(log(Tensor({2}, {1.0f, 0.0f})), DomainError);
  CHECK_THROWS_AS(sqrt(Tensor({1}, {-1.0f})), DomainError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0f}), DimensionError);
}

TEST_CASE("backward of simple losses") {
  Tensor x({3}, {1, 2, 3}, true);
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(sum(x * x));
  }
  CHECK(std::vector<float>(x.grad().begin(), x.grad().end()) == std::vector<float>{2, 4, 6});

  Tensor z = Tensor::scalar(0.0f, true);
  Tape t2;
  {
    TapeScope scope(t2);
    t2.backward(log_sigmoid(z));
  }
  CHECK(z.grad()[0] == doctest::Approx(0.5));
}

TEST_CASE("backward rejects non-scalar and non-finite losses") {
  Tensor x({2}, {1, 2}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor y = x * x;
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  const Tensor bad = sum(x * Tensor::scalar(std::numeric_limits<float>::infinity()));
  CHECK_THROWS_AS(tape.backward(bad), NumericError);
}

TEST_CASE("nothing is recorded without a tape or without grad inputs") {
  Tensor x({2}, {1, 2}, true);
  const Tensor y = sum(x * x);  // no active tape
  CHECK(!y.requires_grad());
  Tape tape;
  TapeScope scope(tape);
  const Tensor c({2}, {3, 4});
  (void)sum(c * c);
  CHECK(tape.size() == 0);
}

TEST_CASE("backward visits each recorded op once") {
  Tensor x({2, 2}, {1, 2, 3, 4}, true);
  Tape tape;
  TapeScope scope(tape);
  const Tensor l = mean(exp(x) + relu(x) * x);
  const std::size_t recorded = tape.size();
  CHECK(recorded == 5);
  tape.backward(l);
  CHECK(tape.last_visit_count() == recorded);
  CHECK(tape.size() == 0);
}

TEST_CASE("every op matches central differences") {
  const std::vector<std::size_t> perm{2, 0, 1, 2};
  const std::vector<std::size_t> rows{1, 1, 0};
  // Each loss is generic over the element type so it can run at f32 (taped) and f64.
  const auto check = [](auto loss, std::vector<Shape> shapes) {
    CHECK(worst_gradient_error(loss, shapes, 20, 1234) <= 1e-3);
  };
  check([](auto& p) { return project(matmul(p[0], p[1])); }, {{2, 3}, {3, 4}});
  check([](auto& p) { return project(p[0] + p[1]); }, {{3, 4}, {1, 4}});
  check([](auto& p) { return project(p[0] - p[1]); }, {{3, 4}, {3, 1}});
  check([](auto& p) { return project(p[0] * p[1]); }, {{3, 4}, {1, 1}});
  check([](auto& p) { return project(p[0] / (p[1] * p[1] + 1.0)); }, {{3, 4}, {3, 4}});
  check([](auto& p) { return project(exp(p[0])); }, {{2, 3}});
  check([](auto& p) { return project(log(p[0] * p[0] + 0.5)); }, {{2, 3}});
  check([](auto& p) { return project(sqrt(p[0] * p[0] + 0.5)); }, {{2, 3}});
  check([](auto& p) { return project(relu(p[0])); }, {{2, 3}});
  check([](auto& p) { return project(sigmoid(p[0] * 3.0)); }, {{2, 3}});
  check([](auto& p) { return project(log_sigmoid(p[0] * 3.0)); }, {{2, 3}});
  check([](auto& p) { return project(atan(p[0] * 2.0)); }, {{2, 3}});
  check([](auto& p) { return sum(p[0] * p[0]) + mean(p[0]); }, {{3, 3}});
  check([](auto& p) { return project(row_sum(p[0] * p[0])); }, {{3, 4}});
  check([&](auto& p) { return project(gather_cols(p[0], std::span<const std::size_t>(perm))); }, {{2, 3}});
  check([&](auto& p) { return project(gather_rows(p[0], std::span<const std::size_t>(rows))); }, {{2, 3}});
  check([](auto& p) { return project(concat_cols(p[0], p[1])); }, {{2, 3}, {2, 2}});
  check([](auto& p) { return project(affine(p[0], p[1], p[2])); }, {{3, 2}, {1, 2}, {1, 2}});
  check([](auto& p) { return project(batch_norm(p[0], p[1], p[2], 1e-5).output); }, {{5, 3}, {1, 3}, {1, 3}});
}

TEST_CASE("forward evaluation is deterministic") {
  std::mt19937_64 gen(3);
  const auto v = oracle::gaussian(12, gen);
  const Tensor a({3, 4}, std::vector<float>(v.begin(), v.end()));
  const Tensor y1 = batch_norm(exp(a), Tensor::full({1, 4}, 1.0f), Tensor::zeros({1, 4}), 1e-5).output;
  const Tensor y2 = batch_norm(exp(a), Tensor::full({1, 4}, 1.0f), Tensor::zeros({1, 4}), 1e-5).output;
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
}

}  // TEST_SUITE

TEST_SUITE("optim") {

TEST_CASE("first Adam step moves by about lr") {
  std::vector<float> p{1.0f};
  const std::vector<float> g{1.0f};
  AdamMoments m;
  AdamOptions o;
  o.lr = 0.01;
  o.weight_decay = 0.0;
  adam_update(p, g, m, 1, o);
  // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
  CHECK(1.0 - p[0] == doctest::Approx(0.01 / (1.0 + 1e-8)).epsilon(1e-6));
}

TEST_CASE("zero gradient and zero decay leave parameters unchanged") {
  Tensor w({2, 2}, {1, -2, 3, 4}, true);
  AdamOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.0;
  Adam opt({w}, o);
  for (int i = 0; i < 5; ++i) {
    Tape tape;
    {
      TapeScope scope(tape);
      tape.backward(sum(w * Tensor::scalar(0.0f)));
    }
    opt.step();
    opt.zero_grad();
  }
  CHECK(std::vector<float>(w.data().begin(), w.data().end()) == std::vector<float>{1, -2, 3, 4});
  CHECK(opt.step_count() == 5);
}

TEST_CASE("decoupled weight decay shrinks before the moment step") {
  std::vector<float> p{2.0f};
  AdamMoments m;
  AdamOptions o;
  o.lr = 0.1;
  o.weight_decay = 0.5;
  adam_update(p, std::vector<float>{0.0f}, m, 1, o);
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}

TEST_CASE("identical gradients give identical updates") {
  std::vector<float> a{0.5f, -1.0f}, b{0.5f, -1.0f};
  AdamMoments ma, mb;
  const AdamOptions o;
  for (std::size_t s = 1; s <= 3; ++s) {
    adam_update(a, std::vector<float>{0.3f, -0.7f}, ma, s, o);
    adam_update(b, std::vector<float>{0.3f, -0.7f}, mb, s, o);
  }
  CHECK(a == b);
  CHECK_THROWS_AS(adam_update(a, std::vector<float>{1.0f}, ma, 4, o), DimensionError);
}

TEST_CASE("step schedule") {
  const LrSchedule s;
  CHECK(s.lr_at(0) == doctest::Approx(1e-5));
  CHECK(s.lr_at(69) == doctest::Approx(1e-5));
  CHECK(s.lr_at(70) == doctest::Approx(1e-6));
  CHECK(s.lr_at(75) == doctest::Approx(1e-6));
  CHECK(s.lr_at(95) == doctest::Approx(1e-7));
}

}  // TEST_SUITE
