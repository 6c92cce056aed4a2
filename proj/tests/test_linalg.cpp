#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "restless_bai/linalg.hpp"

using namespace restless_bai;

TEST_CASE("matrix basics") {
  Matrix m(2, 3);
  m(0, 0) = 1.0;
  m(1, 2) = 5.0;
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.row(1)[2] == 5.0);
  CHECK(Matrix::identity(3)(2, 2) == 1.0);
  CHECK(Matrix::identity(3)(0, 1) == 0.0);
}

TEST_CASE("matmul against hand product") {
  Matrix a(2, 2), b(2, 2);
  a(0, 0) = 1.0; a(0, 1) = 2.0; a(1, 0) = 3.0; a(1, 1) = 4.0;
  b(0, 0) = 5.0; b(0, 1) = 6.0; b(1, 0) = 7.0; b(1, 1) = 8.0;
  Matrix c = matmul(a, b);
  CHECK(c(0, 0) == 19.0);
  CHECK(c(0, 1) == 22.0);
  CHECK(c(1, 0) == 43.0);
  CHECK(c(1, 1) == 50.0);
  CHECK(matmul(a, Matrix::identity(2)) == a);
}

TEST_CASE("matrix powers via repeated multiplication") {
  Matrix p(2, 2);
  p(0, 0) = 0.9; p(0, 1) = 0.1;
  p(1, 0) = 0.2; p(1, 1) = 0.8;
  Matrix p2 = matmul(p, p);
  CHECK(p2(0, 0) == Catch::Approx(0.83).epsilon(1e-12));
  CHECK(p2(0, 1) == Catch::Approx(0.17).epsilon(1e-12));
  CHECK(p2(1, 0) == Catch::Approx(0.34).epsilon(1e-12));
  CHECK(p2(1, 1) == Catch::Approx(0.66).epsilon(1e-12));
}

TEST_CASE("solve_linear recovers a known solution") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    int n = 1 + static_cast<int>(rng() % 6);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) a(i, j) = unif(rng);
      a(i, i) += n;  // diagonally dominant, hence invertible
    }
    std::vector<double> x(n);
    for (double& v : x) v = unif(rng);
    std::vector<double> b = mat_vec(a, x);
    std::vector<double> got = solve_linear(a, b);
    for (int i = 0; i < n; ++i) CHECK(got[i] == Catch::Approx(x[i]).margin(1e-10));
  }
}

TEST_CASE("solve_linear rejects singular systems") {
  Matrix a(2, 2);
  a(0, 0) = 1.0; a(0, 1) = 2.0;
  a(1, 0) = 2.0; a(1, 1) = 4.0;
  CHECK_THROWS_AS(solve_linear(a, {1.0, 1.0}), NumericError);
}

TEST_CASE("two-state stationary law matches the closed form") {
  // For flip rates p and q the stationary law is (q, p) / (p + q).
  double p = 0.1, q = 0.2;
  Matrix t(2, 2);
  t(0, 0) = 1.0 - p; t(0, 1) = p;
  t(1, 0) = q;       t(1, 1) = 1.0 - q;
  std::vector<double> mu = stationary_distribution(t);
  CHECK(mu[0] == Catch::Approx(q / (p + q)).margin(1e-10));
  CHECK(mu[1] == Catch::Approx(p / (p + q)).margin(1e-10));
}

TEST_CASE("periodic chain still converges") {
  Matrix t(2, 2);
  t(0, 1) = 1.0;
  t(1, 0) = 1.0;
  std::vector<double> mu = stationary_distribution(t);
  CHECK(mu[0] == Catch::Approx(0.5).margin(1e-10));
  CHECK(mu[1] == Catch::Approx(0.5).margin(1e-10));
}

TEST_CASE("stationary law is invariant under the kernel") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    int n = 2 + static_cast<int>(rng() % 5);
    Matrix t(n, n);
    for (int i = 0; i < n; ++i) {
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        t(i, j) = unif(rng);
        total += t(i, j);
      }
      for (int j = 0; j < n; ++j) t(i, j) /= total;
    }
    std::vector<double> mu = stationary_distribution(t);
    std::vector<double> out = vec_mat(mu, t);
    double mass = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(out[i] == Catch::Approx(mu[i]).margin(1e-9));
      CHECK(mu[i] > 0.0);
      mass += mu[i];
    }
    CHECK(mass == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("norm helpers") {
  Matrix t(2, 2);
  t(0, 0) = 0.5; t(0, 1) = 0.5;
  t(1, 0) = 0.7; t(1, 1) = 0.2;
  CHECK(max_row_sum_error(t) == Catch::Approx(0.1).margin(1e-15));
  CHECK_FALSE(has_negative_entry(t));
  t(1, 1) = -0.1;
  CHECK(has_negative_entry(t));
  std::vector<double> a{1.0, 2.0}, b{1.5, 1.0};
  CHECK(sup_distance(a, b) == 1.0);
  CHECK(sup_norm(a) == 2.0);
}
