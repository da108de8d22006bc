#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "alcr/tensor.hpp"

using namespace alcr::autodiff;

TEST_CASE("tensor: construction, shape and element access") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.rank() == 2);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(t[i] == 1.5);
  t.at(1, 2) = -4.0;
  CHECK(t[5] == -4.0);  // row-major: (1,2) -> 1*3+2

  Tensor s = Tensor::scalar(2.25);
  CHECK(s.rank() == 0);
  CHECK(s.scalar_value() == 2.25);

  Tensor z = Tensor::zeros_like(t);
  CHECK(z.same_shape(t));
  CHECK(z[5] == 0.0);
}

TEST_CASE("tensor: data/shape mismatch throws") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("tensor: finiteness checks") {
  Tensor t({2}, std::vector<double>{1.0, 2.0});
  CHECK(t.all_finite());
  t[1] = std::nan("");
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(t.check_finite("op"), std::runtime_error);
}

TEST_CASE("tensor: l2 norm") {
  Tensor t({3}, std::vector<double>{3.0, 0.0, 4.0});
  CHECK(t.l2_norm_squared() == doctest::Approx(25.0).epsilon(1e-15));
}

// [DERIVED] 2x3 * 3x2 product worked by hand.
TEST_CASE("tensor: matmul_into plain") {
  Tensor a({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, std::vector<double>{7, 8, 9, 10, 11, 12});
  Tensor out({2, 2});
  matmul_into(a, b, false, false, false, out);
  CHECK(out.at(0, 0) == doctest::Approx(58.0));
  CHECK(out.at(0, 1) == doctest::Approx(64.0));
  CHECK(out.at(1, 0) == doctest::Approx(139.0));
  CHECK(out.at(1, 1) == doctest::Approx(154.0));
}

TEST_CASE("tensor: matmul_into transpose flags agree with explicit transposes") {
  Tensor a({3, 2}, std::vector<double>{1, 4, 2, 5, 3, 6});   // a^T of the above
  Tensor b({2, 3}, std::vector<double>{7, 9, 11, 8, 10, 12});  // b^T of the above
  Tensor out({2, 2});
  matmul_into(a, b, true, true, false, out);
  CHECK(out.at(0, 0) == doctest::Approx(58.0));
  CHECK(out.at(1, 1) == doctest::Approx(154.0));

  // accumulate adds into the existing contents.
  matmul_into(a, b, true, true, true, out);
  CHECK(out.at(0, 0) == doctest::Approx(116.0));
}

TEST_CASE("tensor: matmul_into rejects mismatched shapes") {
  Tensor a({2, 3});
  Tensor b({2, 2});
  Tensor out({2, 2});
  CHECK_THROWS_AS(matmul_into(a, b, false, false, false, out), std::invalid_argument);
}

// [DERIVED] sqrt(600^2 + 800^2) = 1000.
TEST_CASE("tensor: gradients global l2 norm") {
  Gradients g;
  g["a"] = Tensor({1}, std::vector<double>{600.0});
  g["b"] = Tensor({2}, std::vector<double>{0.0, 800.0});
  CHECK(g.global_l2_norm() == doctest::Approx(1000.0).epsilon(1e-12));
  CHECK(g.contains("a"));
  CHECK_FALSE(g.contains("c"));
}

TEST_CASE("tensor: parameter store preserves insertion order") {
  ParameterStore ps;
  ps.add("w2", Tensor({2, 2}));
  ps.add("w1", Tensor({3}));
  ps.add("b", Tensor({1}));
  REQUIRE(ps.size() == 3);
  CHECK(ps.names()[0] == "w2");
  CHECK(ps.names()[1] == "w1");
  CHECK(ps.names()[2] == "b");
  CHECK(ps.total_elements() == 8);
  ps.at("w1")[0] = 5.0;
  CHECK(ps.at("w1")[0] == 5.0);
  CHECK(ps.contains("b"));
  CHECK_FALSE(ps.contains("nope"));
  CHECK_THROWS_AS(ps.at("nope"), std::out_of_range);
  CHECK_THROWS_AS(ps.add("w1", Tensor({1})), std::invalid_argument);
}
