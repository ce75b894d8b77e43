#include <doctest.h>

#include <cmath>

#include "spn/adam.hpp"

using namespace spn;

TEST_CASE("first step moves by about lr") {
  ParameterSet p;
  p.add("x", Tensor::scalar(0.0));
  Adam adam(AdamConfig{0.1}, {"x"});
  adam.step(p, {{"x", Tensor::scalar(1.0)}});
  CHECK(p.get("x").value[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(adam.steps() == 1);
}

TEST_CASE("zero gradient leaves the parameter alone") {
  ParameterSet p;
  p.add("x", Tensor::scalar(0.7));
  Adam adam(AdamConfig{0.1}, {"x"});
  for (int i = 0; i < 10; ++i) adam.step(p, {{"x", Tensor::scalar(0.0)}});
  CHECK(p.get("x").value[0] == 0.7);
  CHECK(adam.steps() == 10);
}

TEST_CASE("minimizes a quadratic like the scalar recurrence") {
  // Independent scalar Adam recurrence.
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 50; ++t) {
    const double g = 2 * (x - 3);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.3 * mh / (std::sqrt(vh) + 1e-8);
  }

  ParameterSet p;
  p.add("x", Tensor::scalar(0.0));
  Adam adam(AdamConfig{0.3}, {"x"});
  for (int t = 0; t < 50; ++t) adam.step(p, {{"x", Tensor::scalar(2 * (p.get("x").value[0] - 3))}});
  CHECK(p.get("x").value[0] == doctest::Approx(x).epsilon(1e-12));
  CHECK(std::abs(p.get("x").value[0] - 3) < 0.05);
}

TEST_CASE("gradients must cover managed parameters") {
  ParameterSet p;
  p.add("a", Tensor::matrix(2, 2));
  p.add("b", Tensor::scalar(0));
  Adam adam(AdamConfig{}, {"a"});
  CHECK_THROWS(adam.step(p, {}));
  CHECK_THROWS(adam.step(p, {{"a", Tensor::scalar(1)}}));
  adam.step(p, {{"a", Tensor::matrix(2, 2, 1.0)}});
  CHECK(p.get("b").value[0] == 0.0);
}
