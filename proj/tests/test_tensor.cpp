#include <catch2/catch_amalgamated.hpp>

#include "sq/layers.hpp"
#include "sq/tensor.hpp"
#include "support.hpp"

using namespace sq;

TEST_CASE("reshape_as_matrix views conv and FC weights") {
  Tensor conv({2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  auto view = reshape_as_matrix(conv);
  CHECK(view.rows() == 2);
  CHECK(view.cols() == 3);
  CHECK(view.row(1)[0] == 4.0);

  Tensor fc({10, 512});
  auto fview = reshape_as_matrix(fc);
  CHECK(fview.rows() == 10);
  CHECK(fview.cols() == 512);

  Tensor bad({5});
  CHECK_THROWS_AS(reshape_as_matrix(bad), ShapeError);
}

TEST_CASE("matrix view writes through to the backing tensor") {
  Tensor conv({2, 2, 1, 1}, {1, 2, 3, 4});
  auto view = reshape_as_matrix(conv);
  view.row(0)[1] = 9.0;
  CHECK(conv[1] == 9.0);  // no copy, no reorder
}

TEST_CASE("l1_norm") {
  CHECK(l1_norm(Tensor::of({0.5, -1.5, 1.0})) == 3.0);
  CHECK(l1_norm(Tensor::zeros({4})) == 0.0);
  CHECK(l1_norm(Tensor::of({-2.0})) == 2.0);

  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor t({1 + rng.below(8)});
    sqtest::fill_uniform(t, rng);
    CHECK(l1_norm(t) >= 0.0);
    CHECK((l1_norm(t) == 0.0) == std::all_of(t.flat().begin(), t.flat().end(),
                                             [](double v) { return v == 0; }));
  }
}

TEST_CASE("sign maps zero to +1") {
  const Tensor s = sign(Tensor::of({0.3, -0.2, 0.0}));
  CHECK(s[0] == 1.0);
  CHECK(s[1] == -1.0);
  CHECK(s[2] == 1.0);
}

TEST_CASE("matmul identity") {
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);

  Tensor bad({3, 3});
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("elementwise ops and shape mismatch") {
  Tensor a = Tensor::of({1, -2, 3});
  Tensor b = Tensor::of({0.5, 0.5, 0.5});
  CHECK(add(a, b)[1] == -1.5);
  CHECK(sub(a, b)[0] == 0.5);
  CHECK(scale(a, 2.0)[2] == 6.0);
  CHECK(abs(a)[1] == 2.0);
  CHECK_THROWS_AS(add(a, Tensor::zeros({2})), ShapeError);
}

TEST_CASE("conv2d with a 1x1 scalar kernel scales the map") {
  Conv2d conv(1, 1, 1);
  conv.weights()[0] = 2.0;
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor y = conv.forward(x, false);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("elementwise_expand reinterprets scalars as units") {
  Tensor w({2, 3}, {1, 2, 3, 4, 5, 6});
  auto view = reshape_as_matrix(w);
  auto units = elementwise_expand(view);
  CHECK(units.rows() == 6);
  CHECK(units.cols() == 1);
  CHECK(units.row(4)[0] == 5.0);
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
  CHECK_THROWS_AS(Tensor({4}).reshaped({3}), ShapeError);
}
