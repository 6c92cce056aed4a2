#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "restless_bai/errors.hpp"
#include "restless_bai/graph.hpp"
#include "restless_bai/linalg.hpp"

namespace restless_bai {

// A single arm family: base transition matrix, per-state statistic, and the
// parameter interval over which tilted models are taken.
struct Generator {
  Matrix transition;
  std::vector<double> reward;
  double theta_min = -1.0;
  double theta_max = 1.0;

  int n_states() const { return transition.rows(); }
};

struct FamilyCheck {
  bool row_stochastic = false;
  bool irreducible = false;
  bool reward_non_constant = false;
  bool top_class_irreducible = false;     // restriction to argmax-reward states
  bool bottom_class_irreducible = false;  // restriction to argmin-reward states
  bool top_class_reachable = false;       // one-step access from every other state
  bool bottom_class_reachable = false;
  std::string detail;  // first failure, empty when all hold

  bool ok() const {
    return row_stochastic && irreducible && reward_non_constant && top_class_irreducible &&
           bottom_class_irreducible && top_class_reachable && bottom_class_reachable;
  }
};

namespace detail {

inline std::vector<std::vector<int>> support_graph(const Matrix& p) {
  std::vector<std::vector<int>> adj(p.rows());
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0.0) adj[i].push_back(j);
  return adj;
}

// Irreducibility of the submatrix of p indexed by `members`. A singleton class
// needs a self-loop; larger classes need strong connectivity of the support.
inline bool submatrix_irreducible(const Matrix& p, const std::vector<int>& members) {
  if (members.size() == 1) return p(members[0], members[0]) > 0.0;
  std::vector<int> pos(p.rows(), -1);
  for (int k = 0; k < static_cast<int>(members.size()); ++k) pos[members[k]] = k;
  std::vector<std::vector<int>> adj(members.size());
  for (int k = 0; k < static_cast<int>(members.size()); ++k)
    for (int j = 0; j < p.cols(); ++j)
      if (pos[j] >= 0 && p(members[k], j) > 0.0) adj[k].push_back(pos[j]);
  return strongly_connected(adj);
}

inline bool one_step_access(const Matrix& p, const std::vector<int>& targets) {
  std::vector<bool> is_target(p.rows(), false);
  for (int t : targets) is_target[t] = true;
  for (int i = 0; i < p.rows(); ++i) {
    if (is_target[i]) continue;
    bool hits = false;
    for (int t : targets)
      if (p(i, t) > 0.0) hits = true;
    if (!hits) return false;
  }
  return true;
}

}  // namespace detail

inline FamilyCheck check_family(const Generator& gen) {
  FamilyCheck rep;
  const Matrix& p = gen.transition;
  const int n = gen.n_states();
  auto fail = [&rep](const std::string& why) {
    if (rep.detail.empty()) rep.detail = why;
  };

  if (n < 2 || p.cols() != n || static_cast<int>(gen.reward.size()) != n) {
    fail("shape: need a square matrix over at least two states with a matching reward vector");
    return rep;
  }
  if (!(gen.theta_min < gen.theta_max)) {
    fail("theta interval: empty");
    return rep;
  }
  rep.row_stochastic = !has_negative_entry(p) && max_row_sum_error(p) <= 1e-9;
  if (!rep.row_stochastic) fail("transition matrix is not row-stochastic");

  rep.irreducible = strongly_connected(detail::support_graph(p));
  if (!rep.irreducible) fail("transition matrix is reducible");

  const double f_max = *std::max_element(gen.reward.begin(), gen.reward.end());
  const double f_min = *std::min_element(gen.reward.begin(), gen.reward.end());
  rep.reward_non_constant = f_max > f_min;
  if (!rep.reward_non_constant) {
    fail("reward vector is constant");
    return rep;
  }

  std::vector<int> top, bottom;
  for (int i = 0; i < n; ++i) {
    if (gen.reward[i] == f_max) top.push_back(i);
    if (gen.reward[i] == f_min) bottom.push_back(i);
  }
  rep.top_class_irreducible = detail::submatrix_irreducible(p, top);
  if (!rep.top_class_irreducible) fail("restriction to max-reward states is not irreducible");
  rep.bottom_class_irreducible = detail::submatrix_irreducible(p, bottom);
  if (!rep.bottom_class_irreducible) fail("restriction to min-reward states is not irreducible");
  rep.top_class_reachable = detail::one_step_access(p, top);
  if (!rep.top_class_reachable) fail("some state has no one-step access to a max-reward state");
  rep.bottom_class_reachable = detail::one_step_access(p, bottom);
  if (!rep.bottom_class_reachable) fail("some state has no one-step access to a min-reward state");
  return rep;
}

inline FamilyCheck validate_family(const Generator& gen) {
  FamilyCheck rep = check_family(gen);
  if (!rep.ok()) throw ValidationError("validate_family: " + rep.detail);
  return rep;
}

struct TiltedSpectrum {
  double theta = 0.0;
  double rho = 0.0;                // spectral radius of the tilted matrix
  std::vector<double> eigvec;      // right Perron vector, sup-norm 1, strictly positive
};

namespace detail {

inline Matrix tilted_matrix(const Generator& gen, double theta) {
  const int n = gen.n_states();
  Matrix t(n, n);
  for (int j = 0; j < n; ++j) {
    double w = std::exp(theta * gen.reward[j]);
    for (int i = 0; i < n; ++i) t(i, j) = gen.transition(i, j) * w;
  }
  return t;
}

}  // namespace detail

// Spectral radius and right eigenvector of the exponentially tilted matrix.
// Shifted power iteration: adding s*I moves every eigenvalue by s without
// touching eigenvectors, and makes the iteration converge even when the
// support is periodic. Convergence is certified by the Collatz-Wielandt
// sandwich max_i (Mv)_i/v_i - min_i (Mv)_i/v_i.
inline TiltedSpectrum perron(const Generator& gen, double theta, double rel_tol = 1e-12,
                             int max_iter = 10000) {
  const int n = gen.n_states();
  Matrix m = detail::tilted_matrix(gen, theta);
  double shift = 0.0;
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) s += m(i, j);
    shift = std::max(shift, s);
  }
  shift *= 0.5;
  for (int i = 0; i < n; ++i) m(i, i) += shift;

  std::vector<double> v(n, 1.0);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<double> w = mat_vec(m, v);
    double lo = w[0] / v[0], hi = lo;
    for (int i = 1; i < n; ++i) {
      double r = w[i] / v[i];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    double scale = sup_norm(w);
    for (double& x : w) x /= scale;
    v = std::move(w);
    if (hi - lo <= rel_tol * hi) {
      double rho = 0.5 * (lo + hi) - shift;
      for (double x : v)
        if (!(x > 0.0)) throw NumericError("perron: eigenvector not strictly positive");
      return TiltedSpectrum{theta, rho, std::move(v)};
    }
  }
  throw NumericError("perron: no convergence within iteration cap");
}

// Tilted transition matrix: the eigenvector-twisted normalization of the
// tilted matrix, which is row-stochastic by construction.
inline Matrix tilted_tpm(const Generator& gen, const TiltedSpectrum& spec) {
  const int n = gen.n_states();
  Matrix raw = detail::tilted_matrix(gen, spec.theta);
  Matrix out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      out(i, j) = spec.eigvec[j] * raw(i, j) / (spec.rho * spec.eigvec[i]);
  return out;
}

// An arm pinned at one parameter value: tilted transition matrix, its
// stationary law, the stationary reward mean, and a lazily grown cache of
// matrix powers (one per possible observation delay). Copies share the cache.
class ArmModel {
 public:
  // Skips the stationary-law solve at construction; mu()/eta() then compute
  // it on first use, without synchronization. Meant for cache entries that
  // only ever serve divergence rows.
  struct DeferStationary {};

  ArmModel(const Generator& gen, double theta, const TiltedSpectrum& spec)
      : ArmModel(gen, theta, spec, DeferStationary{}) {
    solve_stationary();
  }

  ArmModel(const Generator& gen, double theta, const TiltedSpectrum& spec, DeferStationary)
      : theta_(theta), rho_(spec.rho), reward_(gen.reward), tpm_(tilted_tpm(gen, spec)),
        store_(std::make_shared<PowerStore>()) {
    store_->powers.push_back(tpm_);
  }

  double theta() const { return theta_; }
  double rho() const { return rho_; }
  double eta() const {
    if (!stat_ready_) solve_stationary();
    return eta_;
  }
  const Matrix& tpm() const { return tpm_; }
  const std::vector<double>& stationary() const {
    if (!stat_ready_) solve_stationary();
    return mu_;
  }
  int n_states() const { return tpm_.rows(); }

  // d-step transition matrix, d >= 1. Thread-safe; models shared across
  // threads extend one common cache.
  const Matrix& tpm_power(int d) const {
    if (d < 1 || d > kMaxDelay)
      throw ValidationError("tpm_power: delay out of range " + std::to_string(d));
    std::lock_guard<std::mutex> lock(store_->mu);
    while (static_cast<int>(store_->powers.size()) < d)
      store_->powers.push_back(matmul(store_->powers.back(), tpm_));
    return store_->powers[d - 1];
  }

  static constexpr int kMaxDelay = 4096;

 private:
  struct PowerStore {
    std::mutex mu;
    std::vector<Matrix> powers;  // powers[k] = tpm^(k+1)
  };

  void solve_stationary() const {
    mu_ = stationary_distribution(tpm_);
    eta_ = 0.0;
    for (int i = 0; i < tpm_.rows(); ++i) eta_ += reward_[i] * mu_[i];
    stat_ready_ = true;
  }

  double theta_, rho_;
  mutable double eta_ = 0.0;
  std::vector<double> reward_;
  Matrix tpm_;
  mutable std::vector<double> mu_;
  mutable bool stat_ready_ = false;
  std::shared_ptr<PowerStore> store_;
};

inline ArmModel arm_model(const Generator& gen, double theta) {
  return ArmModel(gen, theta, perron(gen, theta));
}

inline const Matrix& tpm_power(const ArmModel& model, int d) { return model.tpm_power(d); }

// Stationary reward mean as a function of the parameter; strictly increasing
// on the parameter interval.
inline double stationary_mean(const Generator& gen, double theta) {
  TiltedSpectrum spec = perron(gen, theta);
  Matrix tpm = tilted_tpm(gen, spec);
  std::vector<double> mu = stationary_distribution(tpm);
  double eta = 0.0;
  for (int i = 0; i < gen.n_states(); ++i) eta += gen.reward[i] * mu[i];
  return eta;
}

// Inverse of stationary_mean by bracketed false position (Illinois variant).
// The target is clamped into the attainable interval, so the map is total;
// the clamp also absorbs estimator excursions outside the model's mean range.
inline double mean_to_theta(const Generator& gen, double eta) {
  double lo = gen.theta_min, hi = gen.theta_max;
  double f_lo = stationary_mean(gen, lo) - eta, f_hi = stationary_mean(gen, hi) - eta;
  if (f_lo >= 0.0) return lo;
  if (f_hi <= 0.0) return hi;
  int last_side = 0;
  for (int it = 0; it < 200 && hi - lo > 1e-14; ++it) {
    double x = lo + f_lo * (lo - hi) / (f_hi - f_lo);
    x = std::clamp(x, lo + 1e-15 * (hi - lo), hi - 1e-15 * (hi - lo));
    double fx = stationary_mean(gen, x) - eta;
    if (std::abs(fx) <= 1e-13) return x;
    if (fx < 0.0) {
      lo = x;
      f_lo = fx;
      if (last_side == -1) f_hi *= 0.5;
      last_side = -1;
    } else {
      hi = x;
      f_hi = fx;
      if (last_side == 1) f_lo *= 0.5;
      last_side = 1;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace restless_bai
