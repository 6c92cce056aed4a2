#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "restless_bai/errors.hpp"

namespace restless_bai {

// Dense row-major matrix. Everything in this project is small (a handful of
// states per arm, at most a few thousand MDP states), so no sparse machinery.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols),
        a_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int r, int c) { return a_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return a_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::span<const double> row(int r) const {
    return {a_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }
  std::span<double> row(int r) {
    return {a_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)};
  }

  friend bool operator==(const Matrix& x, const Matrix& y) {
    return x.rows_ == y.rows_ && x.cols_ == y.cols_ && x.a_ == y.a_;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

inline Matrix matmul(const Matrix& x, const Matrix& y) {
  Matrix out(x.rows(), y.cols());
  for (int i = 0; i < x.rows(); ++i)
    for (int k = 0; k < x.cols(); ++k) {
      double xik = x(i, k);
      if (xik == 0.0) continue;
      for (int j = 0; j < y.cols(); ++j) out(i, j) += xik * y(k, j);
    }
  return out;
}

inline std::vector<double> mat_vec(const Matrix& m, std::span<const double> v) {
  std::vector<double> out(m.rows(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j) * v[j];
    out[i] = s;
  }
  return out;
}

inline std::vector<double> vec_mat(std::span<const double> v, const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (int i = 0; i < m.rows(); ++i) {
    double vi = v[i];
    if (vi == 0.0) continue;
    for (int j = 0; j < m.cols(); ++j) out[j] += vi * m(i, j);
  }
  return out;
}

inline double sup_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

inline double sup_norm(std::span<const double> a) {
  double d = 0.0;
  for (double x : a) d = std::max(d, std::abs(x));
  return d;
}

inline double max_row_sum_error(const Matrix& m) {
  double worst = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += m(i, j);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

inline bool has_negative_entry(const Matrix& m) {
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) < 0.0) return true;
  return false;
}

// Gaussian elimination with partial pivoting; consumes its arguments.
inline std::vector<double> solve_linear(Matrix a, std::vector<double> b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw ValidationError("solve_linear: shape mismatch");
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (std::abs(a(pivot, col)) < 1e-14) throw NumericError("solve_linear: singular matrix");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (int r = col + 1; r < n; ++r) {
      double factor = a(r, col) / a(col, col);
      if (factor == 0.0) continue;
      for (int j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double s = b[r];
    for (int j = r + 1; j < n; ++j) s -= a(r, j) * x[j];
    x[r] = s / a(r, r);
  }
  return x;
}

// Stationary law of a row-stochastic matrix. Power iteration on the transpose
// with half-damping (same fixed point, kills periodicity); falls back to a
// direct solve of the balance equations when the iteration stalls.
inline std::vector<double> stationary_distribution(const Matrix& p, double tol = 1e-12,
                                                   int max_iter = 100000) {
  const int n = p.rows();
  if (p.cols() != n) throw ValidationError("stationary_distribution: not square");
  std::vector<double> x(n, 1.0 / n);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> y = vec_mat(x, p);
    for (int i = 0; i < n; ++i) y[i] = 0.5 * (y[i] + x[i]);
    double change = sup_distance(x, y);
    x = std::move(y);
    if (change <= tol) {
      double s = 0.0;
      for (double v : x) s += v;
      for (double& v : x) v /= s;
      return x;
    }
  }
  // Balance equations (P^T - I) mu = 0 with a normalization row in place of
  // the last (redundant) equation.
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = p(j, i) - (i == j ? 1.0 : 0.0);
  for (int j = 0; j < n; ++j) a(n - 1, j) = 1.0;
  std::vector<double> b(n, 0.0);
  b[n - 1] = 1.0;
  std::vector<double> mu = solve_linear(std::move(a), std::move(b));
  for (double& v : mu)
    if (v < 0.0 && v > -1e-12) v = 0.0;
  for (double v : mu)
    if (v < 0.0) throw NumericError("stationary_distribution: negative mass in direct solve");
  return mu;
}

}  // namespace restless_bai
