#include <catch2/catch_amalgamated.hpp>

#include "synformer/tensor.hpp"

using namespace synformer;

TEST_CASE("tensor construction and indexing") {
  Tensor<double> t(2, 3);
  REQUIRE(t.rows() == 2);
  REQUIRE(t.cols() == 3);
  REQUIRE(t.numel() == 6);
  for (double v : t.data) REQUIRE(v == 0.0);
  t.at(1, 2) = 5.0;
  REQUIRE(t.data[5] == 5.0);
  REQUIRE(t.row_ptr(1)[2] == 5.0);
}

TEST_CASE("tensor from_rows and full") {
  auto t = Tensor<double>::from_rows({{1, 2}, {3, 4}, {5, 6}});
  REQUIRE(t.rows() == 3);
  REQUIRE(t.cols() == 2);
  REQUIRE(t.at(2, 1) == 6.0);
  auto f = Tensor<float>::full(2, 2, 0.5f);
  for (float v : f.data) REQUIRE(v == 0.5f);
}

TEST_CASE("matmul_acc matches hand computation") {
  auto a = Tensor<double>::from_rows({{1, 2, 3}, {4, 5, 6}});
  auto b = Tensor<double>::from_rows({{7, 8}, {9, 10}, {11, 12}});
  Tensor<double> c(2, 2);
  matmul_acc(a, b, c);
  REQUIRE(c.at(0, 0) == Catch::Approx(58.0));
  REQUIRE(c.at(0, 1) == Catch::Approx(64.0));
  REQUIRE(c.at(1, 0) == Catch::Approx(139.0));
  REQUIRE(c.at(1, 1) == Catch::Approx(154.0));
  // accumulates rather than overwrites
  matmul_acc(a, b, c);
  REQUIRE(c.at(0, 0) == Catch::Approx(116.0));
}

TEST_CASE("matmul_nt_acc equals a * b^T") {
  auto a = Tensor<double>::from_rows({{1, 2}, {3, 4}});
  auto bt = Tensor<double>::from_rows({{5, 6}, {7, 8}, {9, 10}});  // (3 x 2)
  Tensor<double> c(2, 3);
  matmul_nt_acc(a, bt, c);
  REQUIRE(c.at(0, 0) == Catch::Approx(17.0));   // 1*5 + 2*6
  REQUIRE(c.at(1, 2) == Catch::Approx(67.0));   // 3*9 + 4*10
}

TEST_CASE("matmul_tn_acc equals a^T * b") {
  auto a = Tensor<double>::from_rows({{1, 2}, {3, 4}, {5, 6}});  // (3 x 2)
  auto b = Tensor<double>::from_rows({{1, 0}, {0, 1}, {1, 1}});  // (3 x 2)
  Tensor<double> c(2, 2);
  matmul_tn_acc(a, b, c);
  REQUIRE(c.at(0, 0) == Catch::Approx(1 * 1 + 3 * 0 + 5 * 1));
  REQUIRE(c.at(0, 1) == Catch::Approx(1 * 0 + 3 * 1 + 5 * 1));
  REQUIRE(c.at(1, 0) == Catch::Approx(2 * 1 + 4 * 0 + 6 * 1));
  REQUIRE(c.at(1, 1) == Catch::Approx(2 * 0 + 4 * 1 + 6 * 1));
}

TEST_CASE("cast converts scalar type") {
  auto t = Tensor<double>::from_rows({{1.5, -2.25}});
  auto f = t.cast<float>();
  REQUIRE(f.at(0, 0) == 1.5f);
  REQUIRE(f.at(0, 1) == -2.25f);
}

TEST_CASE("all_finite flags inf and nan") {
  auto t = Tensor<double>::from_rows({{1, 2}});
  REQUIRE(t.all_finite());
  t.at(0, 1) = std::numeric_limits<double>::infinity();
  REQUIRE_FALSE(t.all_finite());
}
