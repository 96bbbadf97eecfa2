#include <doctest.h>

#include "unn/ops.hpp"
#include "unn/tensor.hpp"

using namespace unn;

TEST_CASE("tensor shape and payload invariants") {
  TensorT<float> t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.shape() == std::vector<std::int64_t>{2, 3, 4});
  CHECK_THROWS_AS(TensorT<float>({2, 0, 4}), ShapeError);
  CHECK_THROWS_AS(TensorT<float>::from_vector({2, 2}, {1.f, 2.f, 3.f}), ShapeError);

  TensorT<float> g({3}, true);
  CHECK(g.requires_grad());
  CHECK(g.grad().size() == 3);
  TensorT<float> no_grad({3});
  CHECK_THROWS_AS(no_grad.grad(), UsageError);
}

TEST_CASE("backward: sum gives unit gradients") {
  TensorT<double> x = TensorT<double>::from_vector({2, 2}, {1.0, -2.0, 3.0, 0.5});
  x.set_requires_grad(true);
  Tape<double> tape;
  TensorT<double> loss = mean_all(x, &tape);  // sum/4
  tape.backward(loss);
  for (auto g : x.grad()) CHECK(g == doctest::Approx(0.25));
}

TEST_CASE("backward: loss sum(x*x)/2 gives grad == x") {
  TensorT<double> x = TensorT<double>::from_vector({4}, {1.0, -2.0, 3.0, 0.5});
  x.set_requires_grad(true);
  Tape<double> tape;
  // sum(x*x)/2 == mean(x*x) * n / 2
  TensorT<double> loss = mul_scalar(mean_all(mul(x, x, &tape), &tape), 2.0, &tape);
  tape.backward(loss);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(x.grad()[i] == doctest::Approx(x.data()[i]));
}

TEST_CASE("backward usage errors") {
  TensorT<double> x = TensorT<double>::from_vector({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  TensorT<double> y = mul(x, x, &tape);  // non-scalar
  CHECK_THROWS_AS(tape.backward(y), UsageError);

  Tape<double> tape2;
  TensorT<double> loss = mean_all(mul(x, x, &tape2), &tape2);
  tape2.backward(loss);
  CHECK_THROWS_AS(tape2.backward(loss), UsageError);  // repeated backward
  tape2.clear();

  TensorT<double> detached = TensorT<double>::scalar(1.0);
  Tape<double> tape3;
  CHECK_THROWS_AS(tape3.backward(detached), UsageError);  // nothing requires grad
}

TEST_CASE("grad accumulation across reuse of one tensor") {
  TensorT<double> x = TensorT<double>::from_vector({2}, {3.0, -1.0});
  x.set_requires_grad(true);
  Tape<double> tape;
  // loss = mean(x + x) -> d/dx = 2/n
  TensorT<double> loss = mean_all(add(x, x, &tape), &tape);
  tape.backward(loss);
  for (auto g : x.grad()) CHECK(g == doctest::Approx(1.0));
}
