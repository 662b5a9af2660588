#include <cmath>

#include "doctest.h"
#include "snet/kernels.hpp"
#include "snet/optim.hpp"

using namespace snet;

namespace {

// Adam from its definition, in double.
struct RefAdam {
  double m = 0.0, v = 0.0;
  int t = 0;
  double step(double theta, double g, double lr) {
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t));
    const double vh = v / (1.0 - std::pow(0.999, t));
    return theta - lr * mh / (std::sqrt(vh) + 1e-8);
  }
};

}  // namespace

TEST_CASE("first Adam step moves each parameter by lr against the gradient sign") {
  Tensor p(Shape{1, 1, 1, 3}, std::vector<float>{1.0f, 1.0f, 1.0f});
  auto g = p.ensure_grad();
  g[0] = 0.5f, g[1] = -3.0f, g[2] = 0.0f;
  Tensor* params[] = {&p};
  auto state = optim::AdamState::for_params(params);
  optim::adam_step(params, state, 0.1f);
  CHECK(p.data()[0] == doctest::Approx(0.9f).epsilon(1e-6));
  CHECK(p.data()[1] == doctest::Approx(1.1f).epsilon(1e-6));
  CHECK(p.data()[2] == 1.0f);
  CHECK(state.step == 1);
}

TEST_CASE("Adam sequence matches a double-precision reference for both kernel tables") {
  const float grads[] = {1.0f, -1.0f, 0.25f, 2.0f, -0.5f, 0.0f, 1e-3f};
  for (auto isa : {kernels::Isa::kScalar, kernels::Isa::kAvx2}) {
    if (!kernels::isa_supported(isa)) continue;
    kernels::set_active(isa);
    Tensor p(Shape{1, 1, 1, 1}, 0.3f);
    p.ensure_grad();
    Tensor* params[] = {&p};
    auto state = optim::AdamState::for_params(params);
    RefAdam ref;
    double theta = 0.3;
    for (float g : grads) {
      p.grad()[0] = g;
      optim::adam_step(params, state, 1e-2f);
      theta = ref.step(theta, g, 1e-2);
      CHECK(p.data()[0] == doctest::Approx(theta).epsilon(1e-5));
    }
    // Hand-evaluated second step: m2 = -0.01, v2 = 0.001999, so mhat = -0.01/0.19 and vhat = 1.
    Tensor q(Shape{1, 1, 1, 1}, 0.0f);
    q.ensure_grad();
    Tensor* qs[] = {&q};
    auto st = optim::AdamState::for_params(qs);
    q.grad()[0] = 1.0f;
    optim::adam_step(qs, st, 0.1f);
    q.grad()[0] = -1.0f;
    optim::adam_step(qs, st, 0.1f);
    CHECK(q.data()[0] == doctest::Approx(-0.1 + 0.1 * (0.01 / 0.19)).epsilon(1e-5));
  }
  kernels::set_active(kernels::isa_supported(kernels::Isa::kAvx2) ? kernels::Isa::kAvx2 : kernels::Isa::kScalar);
}

TEST_CASE("Adam rejects a non-positive lr, missing gradients and foreign state") {
  Tensor p(Shape{1, 1, 1, 2});
  Tensor* params[] = {&p};
  auto state = optim::AdamState::for_params(params);
  CHECK_THROWS_AS(optim::adam_step(params, state, 0.1f), ConfigError);
  p.ensure_grad();
  CHECK_THROWS_AS(optim::adam_step(params, state, 0.0f), std::invalid_argument);
  CHECK_THROWS_AS(optim::adam_step(params, state, -1.0f), std::invalid_argument);
  Tensor other(Shape{1, 1, 1, 3});
  other.ensure_grad();
  Tensor* others[] = {&other};
  CHECK_THROWS_AS(optim::adam_step(others, state, 0.1f), ConfigError);
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  Tensor p(Shape{1, 1, 2, 2}, 0.7f);
  p.ensure_grad();
  Tensor* params[] = {&p};
  auto state = optim::AdamState::for_params(params);
  for (int i = 0; i < 5; ++i) optim::adam_step(params, state, 1e-3f);
  for (float v : p.data()) CHECK(v == 0.7f);
}

TEST_CASE("learning-rate schedule halves on schedule and pins at the floor") {
  const optim::LrSchedule s;  // 1e-4, halve every 1e4, floor 1e-6
  CHECK(optim::lr_at(s, 0) == 1e-4);
  CHECK(optim::lr_at(s, 9999) == 1e-4);
  CHECK(optim::lr_at(s, 10000) == 5e-5);
  CHECK(optim::lr_at(s, 60000) == doctest::Approx(1.5625e-6));
  CHECK(optim::lr_at(s, 70000) == 1e-6);  // 7.8e-7 would be below the floor
  CHECK(optim::lr_at(s, 199999) == 1e-6);
  double prev = optim::lr_at(s, 0);
  for (std::int64_t t = 0; t < 200000; t += 997) {
    const double lr = optim::lr_at(s, t);
    CHECK(lr <= prev);
    CHECK(lr >= s.floor);
    prev = lr;
  }
}
