#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "restless_bai/errors.hpp"
#include "restless_bai/exp_family.hpp"
#include "restless_bai/mdp.hpp"

namespace restless_bai {

// Tilted arm models at off-anchor parameter values, keyed by the parameter
// quantized to 1e-9 (adjacent line-search probes land in one bucket, which is
// far below every tolerance used on top). Not thread-safe; callers that run
// concurrently each hold their own cache.
class TiltedModelCache {
 public:
  explicit TiltedModelCache(const Generator& gen) : gen_(&gen) {}

  const ArmModel& at(double lambda) {
    long long key = std::llround(lambda * 1e9);
    auto it = map_.find(key);
    if (it == map_.end()) {
      if (map_.size() >= kMaxEntries) map_.clear();
      it = map_.emplace(key, ArmModel(*gen_, lambda, perron(*gen_, lambda),
                                      ArmModel::DeferStationary{}))
               .first;
    }
    return it->second;
  }

  std::size_t size() const { return map_.size(); }

  static constexpr std::size_t kMaxEntries = 50000;

 private:
  const Generator* gen_;
  std::unordered_map<long long, ArmModel> map_;
};

struct InnerOptions {
  int prescan = 33;       // coarse grid before golden-section refinement
  // Resolution of the refinement in parameter space. The objective error is
  // quadratic in this, so even weight totals in the millions stay far inside
  // every comparison tolerance.
  double x_tol = 4e-6;
  double tie_tol = 1e-12; // best-arm uniqueness margin
};

struct ScalarMin {
  double x = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

namespace detail {

// Coarse scan plus golden-section refinement around the best grid cell. The
// scan guards against local dips; the refinement delivers the accuracy.
template <class F>
ScalarMin minimize_scalar(F&& f, double lo, double hi, const InnerOptions& opt) {
  ScalarMin best;
  auto consider = [&best](double x, double v) {
    if (v < best.value) best = ScalarMin{x, v};
  };
  if (hi - lo <= opt.x_tol) {
    double x = 0.5 * (lo + hi);
    consider(x, f(x));
    return best;
  }
  const int m = std::max(opt.prescan, 5);
  std::vector<double> vals(m);
  int kbest = 0;
  for (int k = 0; k < m; ++k) {
    double x = lo + (hi - lo) * k / (m - 1);
    vals[k] = f(x);
    consider(x, vals[k]);
    if (vals[k] < vals[kbest]) kbest = k;
  }
  double a = lo + (hi - lo) * std::max(kbest - 1, 0) / (m - 1);
  double b = lo + (hi - lo) * std::min(kbest + 1, m - 1) / (m - 1);
  constexpr double kInvPhi = 0.6180339887498949;
  double c = b - (b - a) * kInvPhi;
  double d = a + (b - a) * kInvPhi;
  double fc = f(c), fd = f(d);
  consider(c, fc);
  consider(d, fd);
  while (b - a > opt.x_tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - (b - a) * kInvPhi;
      fc = f(c);
      consider(c, fc);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + (b - a) * kInvPhi;
      fd = f(d);
      consider(d, fd);
    }
  }
  return best;
}

}  // namespace detail

// Evidence against one arm: weighted reference rows to be explained by a
// tilted model. A row pins down (delay, source state) and a target law over
// chain states; the weight is an occupancy mass or a visit count.
struct EvidenceRow {
  int tuple = -1;  // originating (state, arm) tuple, for gradient bookkeeping
  double weight = 0.0;
  int delay = 1;
  int from = 0;
  std::vector<double> target;
  double self_entropy = 0.0;  // sum_j target_j log target_j
};

struct ArmEvidence {
  std::vector<EvidenceRow> rows;
  // Parameter at which the weighted divergence is exactly zero (the anchor for
  // model-generated rows). Unset for empirical rows.
  std::optional<double> exact_minimizer;
};

inline double row_self_entropy(std::span<const double> target) {
  double s = 0.0;
  for (double t : target)
    if (t > 0.0) s += t * std::log(t);
  return s;
}

// Weighted divergence of one arm's evidence from the tilted model at lambda.
inline double arm_divergence(const ArmEvidence& ev, const ArmModel& model) {
  double total = 0.0;
  for (const EvidenceRow& row : ev.rows) {
    if (row.weight <= 0.0) continue;
    std::span<const double> q = model.tpm_power(row.delay).row(row.from);
    double cross = 0.0;
    for (std::size_t j = 0; j < row.target.size(); ++j) {
      double t = row.target[j];
      if (t <= 0.0) continue;
      if (q[j] <= 0.0) return std::numeric_limits<double>::infinity();
      cross += t * std::log(q[j]);
    }
    total += row.weight * (row.self_entropy - cross);
  }
  return total;
}

struct InnerInfResult {
  double value = 0.0;
  std::vector<double> lambda;  // confuser parameters, one per arm
  int worst_arm = -1;          // adversary arm attaining the outer minimum
};

// Infimum of the weighted divergence over every parameter vector whose best
// arm differs from `best`. Decomposes per adversary arm a: all coordinates are
// free except the order constraint lambda_a >= lambda_best, so either both
// unconstrained minimizers already satisfy it, or the two coordinates meet at
// a common point between them.
inline InnerInfResult alt_infimum(const Generator& gen,
                                  const std::vector<ArmEvidence>& evidence, int best,
                                  const InnerOptions& opt, TiltedModelCache& cache) {
  const int k = static_cast<int>(evidence.size());
  if (best < 0 || best >= k) throw ValidationError("alt_infimum: bad best-arm index");
  const double lo = gen.theta_min, hi = gen.theta_max;

  auto g = [&](int arm, double lambda) { return arm_divergence(evidence[arm], cache.at(lambda)); };
  auto has_rows = [&](int arm) {
    for (const EvidenceRow& r : evidence[arm].rows)
      if (r.weight > 0.0) return true;
    return false;
  };

  // Unconstrained per-arm minimum over the whole parameter interval.
  std::vector<ScalarMin> free_min(k);
  for (int a = 0; a < k; ++a) {
    if (!has_rows(a)) {
      free_min[a] = ScalarMin{0.5 * (lo + hi), 0.0};
    } else if (evidence[a].exact_minimizer) {
      free_min[a] = ScalarMin{*evidence[a].exact_minimizer, 0.0};
    } else {
      free_min[a] = detail::minimize_scalar([&](double x) { return g(a, x); }, lo, hi, opt);
    }
  }

  double spectator_total = 0.0;  // arms outside the contested pair sit at their free minimum
  for (int a = 0; a < k; ++a) spectator_total += free_min[a].value;

  InnerInfResult out;
  out.value = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k; ++a) {
    if (a == best) continue;
    // Zero-evidence coordinates are unconstrained in effect: the adversary can
    // sit at the top of the interval, the incumbent at the bottom.
    double ma = has_rows(a) ? free_min[a].x : hi;
    double mb = has_rows(best) ? free_min[best].x : lo;
    double pair_value;
    double la, lb;
    if (ma >= mb) {
      pair_value = free_min[a].value + free_min[best].value;
      la = ma;
      lb = mb;
    } else {
      ScalarMin meet = detail::minimize_scalar(
          [&](double x) { return g(a, x) + g(best, x); }, ma, mb, opt);
      pair_value = meet.value;
      la = lb = meet.x;
    }
    double total = pair_value + spectator_total - free_min[a].value - free_min[best].value;
    if (total < out.value) {
      out.value = total;
      out.worst_arm = a;
      out.lambda.assign(k, 0.0);
      for (int c = 0; c < k; ++c) out.lambda[c] = free_min[c].x;
      out.lambda[a] = la;
      out.lambda[best] = lb;
    }
  }
  if (out.value < 0.0 && out.value > -1e-12) out.value = 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Characteristic-time machinery over the delay MDP.

inline int unique_best_arm(const std::vector<ArmModel>& arms, double tie_tol) {
  int best = 0;
  for (int a = 1; a < static_cast<int>(arms.size()); ++a)
    if (arms[a].eta() > arms[best].eta()) best = a;
  for (int a = 0; a < static_cast<int>(arms.size()); ++a)
    if (a != best && arms[best].eta() - arms[a].eta() <= tie_tol)
      throw ValidationError("best arm is not unique at the given parameters");
  return best;
}

// Evidence rows generated by the model itself at the anchor parameters, one
// per positive-mass admissible tuple.
inline std::vector<ArmEvidence> model_evidence(const StateSpace& space,
                                               const std::vector<ArmModel>& arms,
                                               const Occupancy& nu) {
  if (static_cast<int>(nu.size()) != space.n_tuples())
    throw ValidationError("model_evidence: occupancy length mismatch");
  std::vector<ArmEvidence> ev(arms.size());
  for (int a = 0; a < static_cast<int>(arms.size()); ++a)
    ev[a].exact_minimizer = arms[a].theta();
  for (int s = 0; s < space.n_states(); ++s) {
    const MdpState& st = space.state(s);
    for (int a = 0; a < space.num_arms(); ++a) {
      if (!space.admissible(s, a)) continue;
      double w = nu[space.tuple_index(s, a)];
      if (w <= 0.0) continue;
      std::span<const double> row = arms[a].tpm_power(st.delays[a]).row(st.last_obs[a]);
      EvidenceRow er;
      er.tuple = space.tuple_index(s, a);
      er.weight = w;
      er.delay = st.delays[a];
      er.from = st.last_obs[a];
      er.target.assign(row.begin(), row.end());
      er.self_entropy = row_self_entropy(row);
      ev[a].rows.push_back(std::move(er));
    }
  }
  return ev;
}

// Weighted divergence of the anchored models from the nearest confusing
// instance, for a given occupancy. The inner infimum of the lower bound.
inline InnerInfResult psi(const Generator& gen, const StateSpace& space,
                          const std::vector<ArmModel>& arms, const Occupancy& nu,
                          const InnerOptions& opt = {}, int best_override = -1,
                          TiltedModelCache* shared_cache = nullptr) {
  int best = best_override >= 0 ? best_override : unique_best_arm(arms, opt.tie_tol);
  std::vector<ArmEvidence> ev = model_evidence(space, arms, nu);
  if (shared_cache) return alt_infimum(gen, ev, best, opt, *shared_cache);
  TiltedModelCache cache(gen);
  return alt_infimum(gen, ev, best, opt, cache);
}

// Divergence rate of each admissible tuple against the confusing instance
// lambda; the supergradient of psi in the occupancy.
inline std::vector<double> divergence_rates(const StateSpace& space,
                                            const std::vector<ArmModel>& arms,
                                            const std::vector<double>& lambda,
                                            TiltedModelCache& cache) {
  std::vector<double> c(space.n_tuples(), 0.0);
  for (int a = 0; a < space.num_arms(); ++a) {
    if (std::abs(lambda[a] - arms[a].theta()) <= 1e-15) continue;  // same model, zero rate
    const ArmModel& confuser = cache.at(lambda[a]);
    for (int s = 0; s < space.n_states(); ++s) {
      if (!space.admissible(s, a)) continue;
      const MdpState& st = space.state(s);
      std::span<const double> p = arms[a].tpm_power(st.delays[a]).row(st.last_obs[a]);
      std::span<const double> q = confuser.tpm_power(st.delays[a]).row(st.last_obs[a]);
      double kl = 0.0;
      for (std::size_t j = 0; j < p.size(); ++j)
        if (p[j] > 0.0) kl += p[j] * std::log(p[j] / q[j]);
      c[space.tuple_index(s, a)] = kl;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Linear oracle: maximize a per-tuple reward rate over the occupancy polytope.
// Relative value iteration with an aperiodicity transform, then the stationary
// law of the greedy rule's best recurrent class.

struct RviOptions {
  double span_tol = 1e-10;
  int max_sweeps = 50000;
  double damping = 0.5;  // aperiodicity transform weight on the old values
};

struct LinearOracleResult {
  double gain = 0.0;
  std::vector<int> policy;  // chosen arm per state
  Occupancy occupancy;      // vertex occupancy of the best recurrent class
  int sweeps = 0;
};

inline LinearOracleResult best_occupancy_for_rates(const Kernel& kern,
                                                   const std::vector<double>& rates,
                                                   const RviOptions& opt = {},
                                                   std::vector<double>* bias_io = nullptr) {
  const StateSpace& space = *kern.space;
  if (static_cast<int>(rates.size()) != space.n_tuples())
    throw ValidationError("linear oracle: rate vector length mismatch");
  const int n = space.n_states();
  const double keep = opt.damping;

  std::vector<double> h(n, 0.0);
  if (bias_io && static_cast<int>(bias_io->size()) == n) h = *bias_io;
  std::vector<double> fresh(n, 0.0);
  int sweeps = 0;
  bool converged = false;
  while (sweeps < opt.max_sweeps) {
    ++sweeps;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int s = 0; s < n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < space.num_arms(); ++a) {
        if (!space.admissible(s, a)) continue;
        double q = rates[space.tuple_index(s, a)];
        for (const KernelEntry& e : kern.row(s, a)) q += e.prob * h[e.next_state];
        best = std::max(best, q);
      }
      fresh[s] = (1.0 - keep) * best + keep * h[s];
      double diff = fresh[s] - h[s];
      lo = std::min(lo, diff);
      hi = std::max(hi, diff);
    }
    double base = fresh[0];
    for (int s = 0; s < n; ++s) h[s] = fresh[s] - base;
    if (hi - lo <= opt.span_tol * (1.0 - keep)) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("linear oracle: value iteration did not converge");
  if (bias_io) *bias_io = h;

  LinearOracleResult out;
  out.sweeps = sweeps;
  out.policy.assign(n, -1);
  for (int s = 0; s < n; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < space.num_arms(); ++a) {
      if (!space.admissible(s, a)) continue;
      double q = rates[space.tuple_index(s, a)];
      for (const KernelEntry& e : kern.row(s, a)) q += e.prob * h[e.next_state];
      if (q > best) {
        best = q;
        out.policy[s] = a;
      }
    }
  }

  // The greedy rule may be multichain; score each closed class and keep the
  // best one as the vertex.
  std::vector<std::vector<int>> adj(n);
  for (int s = 0; s < n; ++s)
    for (const KernelEntry& e : kern.row(s, out.policy[s])) adj[s].push_back(e.next_state);
  auto classes = closed_components(adj);
  if (classes.empty()) throw NumericError("linear oracle: no recurrent class");

  out.gain = -std::numeric_limits<double>::infinity();
  for (const auto& members : classes) {
    const int m = static_cast<int>(members.size());
    std::vector<int> pos(n, -1);
    for (int i = 0; i < m; ++i) pos[members[i]] = i;
    Matrix sub(m, m);
    for (int i = 0; i < m; ++i)
      for (const KernelEntry& e : kern.row(members[i], out.policy[members[i]])) {
        if (pos[e.next_state] < 0)
          throw NumericError("linear oracle: closed class leaks");
        sub(i, pos[e.next_state]) += e.prob;
      }
    std::vector<double> mu = stationary_distribution(sub);
    double gain = 0.0;
    for (int i = 0; i < m; ++i)
      gain += mu[i] * rates[space.tuple_index(members[i], out.policy[members[i]])];
    if (gain > out.gain) {
      out.gain = gain;
      out.occupancy.assign(space.n_tuples(), 0.0);
      for (int i = 0; i < m; ++i)
        out.occupancy[space.tuple_index(members[i], out.policy[members[i]])] = mu[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Outer maximization by Frank-Wolfe over the occupancy polytope.

struct SolverConfig {
  double tol = 1e-6;   // duality-gap certificate target
  int max_iter = 20000;
  InnerOptions inner;
  RviOptions rvi;
};

struct LowerBoundResult {
  double value = 0.0;   // psi at the returned occupancy
  double fw_gap = 0.0;  // linear-oracle certificate at the returned occupancy
  int iterations = 0;
  Occupancy nu;
  InnerInfResult inner;
};

// Selection rule that reproduces a target occupancy state by state; states the
// occupancy never visits fall back to uniform-over-admissible. Used to carry a
// maximizer from one kernel to a nearby one as a feasible warm start.
inline SrsPolicy occupancy_policy(const StateSpace& space, const Occupancy& nu) {
  SrsPolicy pol{Matrix(space.n_states(), space.num_arms())};
  for (int s = 0; s < space.n_states(); ++s) {
    int forced = space.forced_arm(s);
    if (forced >= 0) {
      pol.probs(s, forced) = 1.0;
      continue;
    }
    double total = 0.0;
    for (int a = 0; a < space.num_arms(); ++a) {
      double w = std::max(nu[space.tuple_index(s, a)], 0.0);
      pol.probs(s, a) = w;
      total += w;
    }
    if (total > 0.0) {
      for (int a = 0; a < space.num_arms(); ++a) pol.probs(s, a) /= total;
    } else {
      for (int a = 0; a < space.num_arms(); ++a)
        pol.probs(s, a) = 1.0 / space.num_arms();
    }
  }
  return pol;
}

inline LowerBoundResult t_star(const Generator& gen, const StateSpace& space,
                               const std::vector<ArmModel>& arms, const Kernel& kern,
                               const SolverConfig& cfg = {}, const Occupancy* warm = nullptr,
                               int best_override = -1) {
  int best = best_override >= 0 ? best_override : unique_best_arm(arms, cfg.inner.tie_tol);
  TiltedModelCache cache(gen);

  Occupancy nu = warm ? stationary_occupancy(kern, occupancy_policy(space, *warm))
                      : stationary_occupancy(kern, uniform_policy(space));

  LowerBoundResult out;
  std::vector<double> bias;  // warm bias across oracle calls
  for (int it = 0; it <= cfg.max_iter; ++it) {
    out.inner = psi(gen, space, arms, nu, cfg.inner, best, &cache);
    std::vector<double> rates = divergence_rates(space, arms, out.inner.lambda, cache);
    LinearOracleResult lin = best_occupancy_for_rates(kern, rates, cfg.rvi, &bias);
    out.value = out.inner.value;
    // Duality makes the true gap nonnegative; tiny negatives are roundoff
    // between the two evaluation routes.
    out.fw_gap = std::max(lin.gain - out.inner.value, 0.0);
    out.iterations = it;
    out.nu = nu;
    if (out.fw_gap <= cfg.tol || it == cfg.max_iter) break;
    double step = 2.0 / (it + 2.0);
    for (int t = 0; t < space.n_tuples(); ++t)
      nu[t] = (1.0 - step) * nu[t] + step * lin.occupancy[t];
  }
  return out;
}

// Lower-bound rate under the uniform selection rule (no outer maximization).
struct UnifBoundResult {
  double value = 0.0;
  Occupancy nu;
  InnerInfResult inner;
};

inline UnifBoundResult t_unif(const Generator& gen, const StateSpace& space,
                              const std::vector<ArmModel>& arms, const Kernel& kern,
                              const InnerOptions& opt = {}, int best_override = -1) {
  UnifBoundResult out;
  out.nu = stationary_occupancy(kern, uniform_policy(space));
  out.inner = psi(gen, space, arms, out.nu, opt, best_override);
  out.value = out.inner.value;
  return out;
}

}  // namespace restless_bai
