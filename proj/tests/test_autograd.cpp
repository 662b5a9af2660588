#include <cmath>

#include "doctest.h"
#include "snet/autograd.hpp"
#include "snet/gradcheck.hpp"
#include "snet/ops.hpp"
#include "test_util.hpp"

using namespace snet;
using snet::testing::random_tensor;

TEST_CASE("tape gradients of a conv-relu-conv residual graph match central differences (double)") {
  BasicConvParams<double> c1(2, 3, 3), c2(3, 2, 1);
  c1.weight = random_tensor<double>(c1.weight.shape(), 1);
  c1.bias = random_tensor<double>(c1.bias.shape(), 2);
  c2.weight = random_tensor<double>(c2.weight.shape(), 3);
  c2.bias = random_tensor<double>(c2.bias.shape(), 4);
  const auto x = random_tensor<double>(Shape{2, 2, 5, 4}, 5);
  const auto t = random_tensor<double>(Shape{2, 2, 5, 4}, 6);

  const auto loss_value = [&] {
    const TensorD h = ops::relu(ops::conv2d_same(x, c1.weight, c1.bias));
    const TensorD y = ops::add(x, ops::conv2d_same(h, c2.weight, c2.bias));
    return ops::mse(y, t);
  };

  for (auto* p : {&c1.weight, &c1.bias, &c2.weight, &c2.bias}) p->ensure_grad(), p->zero_grad();
  TapeD tape;
  const VarId xv = tape.constant(x), tv = tape.constant(t);
  const VarId h = tape.relu(tape.conv2d_same(xv, c1));
  const VarId y = tape.add(xv, tape.conv2d_same(h, c2));
  const VarId loss = tape.mse(y, tv);
  CHECK(tape.scalar(loss) == doctest::Approx(loss_value()).epsilon(1e-12));
  tape.backward(loss);

  for (auto* p : {&c1.weight, &c1.bias, &c2.weight, &c2.bias}) {
    const auto numeric = fd_gradient<double>(loss_value, p->data(), 1e-6);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      CHECK(relative_error(p->grad()[i], numeric[i], 1e-9) < 1e-5);
    }
  }
}

TEST_CASE("a parameter used twice accumulates both contributions") {
  BasicConvParams<double> c(2, 2, 3);
  c.weight = random_tensor<double>(c.weight.shape(), 11);
  c.bias = random_tensor<double>(c.bias.shape(), 12);
  const auto x = random_tensor<double>(Shape{1, 2, 4, 4}, 13);
  const auto t = random_tensor<double>(Shape{1, 2, 4, 4}, 14);
  const auto loss_value = [&] {
    const TensorD a = ops::conv2d_same(x, c.weight, c.bias);
    const TensorD b = ops::conv2d_same(a, c.weight, c.bias);
    return 0.5 * (ops::mse(a, t) + ops::mse(b, t));
  };
  c.weight.ensure_grad();
  c.bias.ensure_grad();
  c.weight.zero_grad();
  c.bias.zero_grad();
  TapeD tape;
  const VarId w1 = tape.parameter(c.weight);
  CHECK(tape.parameter(c.weight) == w1);
  const VarId xv = tape.constant(x), tv = tape.constant(t);
  const VarId a = tape.conv2d_same(xv, c);
  const VarId b = tape.conv2d_same(a, c);
  const VarId terms[] = {tape.mse(a, tv), tape.mse(b, tv)};
  const VarId loss = tape.mean(terms);
  CHECK(tape.scalar(loss) == doctest::Approx(loss_value()).epsilon(1e-12));
  tape.backward(loss);
  const auto numeric = fd_gradient<double>(loss_value, c.weight.data(), 1e-6);
  for (std::size_t i = 0; i < numeric.size(); ++i) CHECK(relative_error(c.weight.grad()[i], numeric[i], 1e-9) < 1e-6);
}

TEST_CASE("backward requires a scalar loss and zero-fills unreachable parameters") {
  Tensor unused(Shape{1, 1, 1, 2}, 3.0f);
  Tensor w(Shape{1, 1, 1, 1}, 2.0f), b(Shape{1, 1, 1, 1}, 0.0f);
  Tape tape;
  tape.parameter(unused);
  const VarId x = tape.constant(Tensor(Shape{1, 1, 2, 2}, 1.0f));
  const VarId y = tape.conv2d_same(x, tape.parameter(w), tape.parameter(b));
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
  const VarId loss = tape.mse(y, tape.constant(Tensor(Shape{1, 1, 2, 2}, 0.0f)));
  tape.backward(loss);
  REQUIRE(unused.has_grad());
  CHECK(unused.grad()[0] == 0.0f);
  // d/dw mean((w*1 + b)^2) = 2 * (w + b) = 4
  CHECK(w.grad()[0] == doctest::Approx(4.0f));
  CHECK(b.grad()[0] == doctest::Approx(4.0f));
}

TEST_CASE("fd_gradient restores theta and rejects a non-positive step") {
  std::vector<double> theta{1.0, -2.0};
  const auto g = fd_gradient<double>([&] { return theta[0] * theta[0] + 3.0 * theta[1]; }, theta, 1e-4);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(3.0));
  CHECK(theta == std::vector<double>{1.0, -2.0});
  CHECK_THROWS_AS(fd_gradient<double>([] { return 0.0; }, theta, 0.0), std::invalid_argument);
}

TEST_CASE("micro S-Net gradient check passes in both precisions and both unit kinds") {
  for (auto kind : {model::UnitKind::kAdvanced, model::UnitKind::kClassic}) {
    for (auto prec : {Precision::kFloat32, Precision::kFloat64}) {
      GradCheckOptions o;
      o.config.unit_kind = kind;
      o.precision = prec;
      const auto r = gradcheck(o);
      INFO("worst ", r.worst_param, "[", r.worst_index, "] err ", r.max_rel_error);
      CHECK(r.checked == model::count_params(o.config).total);
      CHECK(r.passed);
    }
  }
  GradCheckOptions columnar;
  columnar.config.loss_mode = model::LossMode::kColumnar;
  columnar.precision = Precision::kFloat64;
  CHECK(gradcheck(columnar).passed);
}

TEST_CASE("relative_error is symmetric in scale and honours the floor") {
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1e-9, 0.0, 1e-6) == doctest::Approx(1e-3));
}
