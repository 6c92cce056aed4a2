#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

#include "restless_bai/errors.hpp"
#include "restless_bai/exp_family.hpp"
#include "restless_bai/graph.hpp"
#include "restless_bai/linalg.hpp"

namespace restless_bai {

struct MdpConfig {
  int num_arms = 0;
  int max_delay = 0;  // forced-selection cap on any arm's observation delay
  int arm_states = 0;
};

// One controller state: per-arm observation delay (1..max_delay, the arm just
// selected is at 1) and per-arm last observed chain state.
struct MdpState {
  std::vector<int> delays;
  std::vector<int> last_obs;
};

class StateSpace {
 public:
  explicit StateSpace(const MdpConfig& cfg) : cfg_(cfg) {
    if (cfg.num_arms < 2) throw ValidationError("state space: need at least two arms");
    if (cfg.arm_states < 2) throw ValidationError("state space: need at least two chain states");
    if (cfg.max_delay < cfg.num_arms)
      throw ValidationError("state space: max delay below the number of arms");
    enumerate();
  }

  const MdpConfig& config() const { return cfg_; }
  int num_arms() const { return cfg_.num_arms; }
  int max_delay() const { return cfg_.max_delay; }
  int arm_states() const { return cfg_.arm_states; }

  int n_states() const { return static_cast<int>(states_.size()); }
  int n_tuples() const { return n_states() * cfg_.num_arms; }
  const MdpState& state(int s) const { return states_[s]; }
  const std::vector<MdpState>& states() const { return states_; }

  // Arm forced by a maximal delay, or -1 when every arm is admissible.
  int forced_arm(int s) const { return forced_[s]; }
  bool admissible(int s, int a) const { return forced_[s] < 0 || forced_[s] == a; }
  int tuple_index(int s, int a) const { return s * cfg_.num_arms + a; }

  int index_of(const std::vector<int>& delays, const std::vector<int>& last_obs) const {
    auto it = index_.find(encode(delays, last_obs));
    if (it == index_.end()) throw ValidationError("state space: state not reachable");
    return it->second;
  }

  // Post-selection state: selected arm drops to delay 1 with the fresh
  // observation, every other arm ages by one tick.
  int successor(int s, int a, int obs) const {
    if (!admissible(s, a)) throw ValidationError("successor: arm not admissible in this state");
    if (obs < 0 || obs >= cfg_.arm_states) throw ValidationError("successor: bad observation");
    const MdpState& cur = states_[s];
    std::vector<int> d(cur.delays), o(cur.last_obs);
    for (int b = 0; b < cfg_.num_arms; ++b) d[b] = (b == a) ? 1 : d[b] + 1;
    o[a] = obs;
    return index_of(d, o);
  }

 private:
  std::uint64_t encode(const std::vector<int>& delays, const std::vector<int>& obs) const {
    std::uint64_t key = 0;
    for (int a = 0; a < cfg_.num_arms; ++a) {
      key = key * static_cast<std::uint64_t>(cfg_.max_delay) +
            static_cast<std::uint64_t>(delays[a] - 1);
      key = key * static_cast<std::uint64_t>(cfg_.arm_states) + static_cast<std::uint64_t>(obs[a]);
    }
    return key;
  }

  void enumerate() {
    const int k = cfg_.num_arms, r = cfg_.max_delay, s = cfg_.arm_states;
    // Reachable delay vectors, by closure from the end-of-warm-up vector
    // (K, K-1, ..., 1).
    std::vector<std::vector<int>> delay_vecs;
    std::unordered_map<std::uint64_t, int> seen;
    auto dkey = [r, k](const std::vector<int>& d) {
      std::uint64_t key = 0;
      for (int a = 0; a < k; ++a)
        key = key * static_cast<std::uint64_t>(r) + static_cast<std::uint64_t>(d[a] - 1);
      return key;
    };
    std::vector<int> canonical(k);
    for (int a = 0; a < k; ++a) canonical[a] = k - a;
    seen.emplace(dkey(canonical), 0);
    delay_vecs.push_back(canonical);
    std::deque<int> frontier{0};
    while (!frontier.empty()) {
      std::vector<int> cur = delay_vecs[frontier.front()];
      frontier.pop_front();
      int forced = -1;
      for (int a = 0; a < k; ++a)
        if (cur[a] == r) forced = a;
      for (int a = 0; a < k; ++a) {
        if (forced >= 0 && a != forced) continue;
        std::vector<int> next(k);
        for (int b = 0; b < k; ++b) next[b] = (b == a) ? 1 : cur[b] + 1;
        auto [it, fresh] = seen.emplace(dkey(next), static_cast<int>(delay_vecs.size()));
        if (fresh) {
          delay_vecs.push_back(next);
          frontier.push_back(it->second);
        }
      }
    }

    // Cross with every observation tuple, then fix a stable lexicographic
    // order on (delays, last_obs).
    std::vector<int> obs(k, 0);
    for (const auto& d : delay_vecs) {
      std::fill(obs.begin(), obs.end(), 0);
      while (true) {
        states_.push_back(MdpState{d, obs});
        int pos = k - 1;
        while (pos >= 0 && obs[pos] == s - 1) obs[pos--] = 0;
        if (pos < 0) break;
        ++obs[pos];
      }
    }
    std::sort(states_.begin(), states_.end(), [](const MdpState& x, const MdpState& y) {
      if (x.delays != y.delays) return x.delays < y.delays;
      return x.last_obs < y.last_obs;
    });
    index_.reserve(states_.size());
    forced_.resize(states_.size(), -1);
    for (int i = 0; i < static_cast<int>(states_.size()); ++i) {
      index_.emplace(encode(states_[i].delays, states_[i].last_obs), i);
      for (int a = 0; a < k; ++a)
        if (states_[i].delays[a] == r) forced_[i] = a;
    }
  }

  MdpConfig cfg_;
  std::vector<MdpState> states_;
  std::vector<int> forced_;
  std::unordered_map<std::uint64_t, int> index_;
};

inline StateSpace enumerate_states(const MdpConfig& cfg) { return StateSpace(cfg); }

// Transition kernel rows, one per admissible (state, arm). The observation of
// arm a after delay d follows the d-step transition matrix from the arm's last
// observed chain state.
struct KernelEntry {
  int obs;
  int next_state;
  double prob;
};

struct Kernel {
  const StateSpace* space = nullptr;
  std::vector<std::vector<KernelEntry>> rows;  // indexed by tuple, empty when inadmissible

  const std::vector<KernelEntry>& row(int s, int a) const {
    return rows[space->tuple_index(s, a)];
  }
};

inline Kernel build_kernel(const StateSpace& space, const std::vector<ArmModel>& arms) {
  if (static_cast<int>(arms.size()) != space.num_arms())
    throw ValidationError("build_kernel: arm count mismatch");
  Kernel kern;
  kern.space = &space;
  kern.rows.resize(space.n_tuples());
  for (int s = 0; s < space.n_states(); ++s) {
    const MdpState& st = space.state(s);
    for (int a = 0; a < space.num_arms(); ++a) {
      if (!space.admissible(s, a)) continue;
      const Matrix& power = arms[a].tpm_power(st.delays[a]);
      auto& row = kern.rows[space.tuple_index(s, a)];
      for (int j = 0; j < space.arm_states(); ++j) {
        double p = power(st.last_obs[a], j);
        if (p <= 0.0) continue;
        row.push_back(KernelEntry{j, space.successor(s, a, j), p});
      }
    }
  }
  return kern;
}

// State-conditional randomized selection rule.
struct SrsPolicy {
  Matrix probs;  // n_states x num_arms

  double operator()(int s, int a) const { return probs(s, a); }
};

inline SrsPolicy uniform_policy(const StateSpace& space) {
  SrsPolicy pol{Matrix(space.n_states(), space.num_arms())};
  for (int s = 0; s < space.n_states(); ++s) {
    int f = space.forced_arm(s);
    if (f >= 0) {
      pol.probs(s, f) = 1.0;
    } else {
      for (int a = 0; a < space.num_arms(); ++a)
        pol.probs(s, a) = 1.0 / space.num_arms();
    }
  }
  return pol;
}

inline void validate_policy(const StateSpace& space, const SrsPolicy& pol) {
  if (pol.probs.rows() != space.n_states() || pol.probs.cols() != space.num_arms())
    throw ValidationError("policy: shape mismatch");
  for (int s = 0; s < space.n_states(); ++s) {
    double total = 0.0;
    for (int a = 0; a < space.num_arms(); ++a) {
      double p = pol.probs(s, a);
      if (p < 0.0) throw ValidationError("policy: negative probability");
      if (!space.admissible(s, a) && p > 0.0)
        throw ValidationError("policy: mass on an inadmissible arm");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ValidationError("policy: row does not sum to one");
  }
}

// Occupancy over (state, arm) tuples, indexed by StateSpace::tuple_index.
using Occupancy = std::vector<double>;

namespace detail {

inline std::vector<std::vector<int>> policy_state_graph(const Kernel& kern,
                                                        const SrsPolicy& pol) {
  const StateSpace& space = *kern.space;
  std::vector<std::vector<int>> adj(space.n_states());
  for (int s = 0; s < space.n_states(); ++s) {
    for (int a = 0; a < space.num_arms(); ++a) {
      if (pol(s, a) <= 0.0) continue;
      for (const KernelEntry& e : kern.row(s, a)) adj[s].push_back(e.next_state);
    }
  }
  for (auto& v : adj) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return adj;
}

}  // namespace detail

// Long-run state-action frequencies of the chain induced by a selection rule.
// Half-damped power iteration (periodic delay cycles are common here), with a
// dense balance-equation solve as fallback. Requires a single recurrent class.
inline Occupancy stationary_occupancy(const Kernel& kern, const SrsPolicy& pol,
                                      double tol = 1e-12, int max_iter = 100000) {
  const StateSpace& space = *kern.space;
  validate_policy(space, pol);
  auto closed = closed_components(detail::policy_state_graph(kern, pol));
  if (closed.size() != 1)
    throw ValidationError("stationary_occupancy: selection rule is not ergodic (" +
                          std::to_string(closed.size()) + " recurrent classes)");

  const int nt = space.n_tuples();
  std::vector<double> x(nt, 0.0);
  for (int s = 0; s < space.n_states(); ++s)
    for (int a = 0; a < space.num_arms(); ++a)
      x[space.tuple_index(s, a)] = pol(s, a) / space.n_states();

  std::vector<double> state_in(space.n_states());
  for (int it = 0; it < max_iter; ++it) {
    std::fill(state_in.begin(), state_in.end(), 0.0);
    for (int s = 0; s < space.n_states(); ++s)
      for (int a = 0; a < space.num_arms(); ++a) {
        double mass = x[space.tuple_index(s, a)];
        if (mass <= 0.0) continue;
        for (const KernelEntry& e : kern.row(s, a)) state_in[e.next_state] += mass * e.prob;
      }
    double change = 0.0;
    for (int s = 0; s < space.n_states(); ++s)
      for (int a = 0; a < space.num_arms(); ++a) {
        int t = space.tuple_index(s, a);
        double fresh = state_in[s] * pol(s, a);
        double damped = 0.5 * (x[t] + fresh);
        change = std::max(change, std::abs(damped - x[t]));
        x[t] = damped;
      }
    if (change <= tol) {
      double total = 0.0;
      for (double v : x) total += v;
      for (double& v : x) v /= total;
      return x;
    }
  }

  // Balance equations on the tuple chain, normalization replacing one row.
  Matrix a(nt, nt);
  for (int s = 0; s < space.n_states(); ++s)
    for (int arm = 0; arm < space.num_arms(); ++arm) {
      int from = space.tuple_index(s, arm);
      for (const KernelEntry& e : kern.row(s, arm))
        for (int a2 = 0; a2 < space.num_arms(); ++a2) {
          double p = e.prob * pol(e.next_state, a2);
          if (p != 0.0) a(space.tuple_index(e.next_state, a2), from) += p;
        }
    }
  for (int t = 0; t < nt; ++t) a(t, t) -= 1.0;
  for (int t = 0; t < nt; ++t) a(nt - 1, t) = 1.0;
  std::vector<double> b(nt, 0.0);
  b[nt - 1] = 1.0;
  Occupancy nu = solve_linear(std::move(a), std::move(b));
  for (double& v : nu)
    if (v < 0.0 && v > -1e-10) v = 0.0;
  for (double v : nu)
    if (v < 0.0) throw NumericError("stationary_occupancy: negative mass in direct solve");
  return nu;
}

struct OccupancyReport {
  double mass_error = 0.0;         // |sum - 1|
  double min_entry = 0.0;          // most negative entry (0 when none)
  double max_flow_residual = 0.0;  // worst per-state inflow/outflow mismatch
  double inadmissible_mass = 0.0;  // total mass on forced-state violations
  bool pass = false;
};

inline OccupancyReport check_occupancy(const Kernel& kern, const Occupancy& nu, double tol) {
  const StateSpace& space = *kern.space;
  if (static_cast<int>(nu.size()) != space.n_tuples())
    throw ValidationError("check_occupancy: length mismatch");
  OccupancyReport rep;
  double total = 0.0;
  for (double v : nu) {
    total += v;
    rep.min_entry = std::min(rep.min_entry, v);
  }
  rep.mass_error = std::abs(total - 1.0);

  std::vector<double> inflow(space.n_states(), 0.0);
  for (int s = 0; s < space.n_states(); ++s)
    for (int a = 0; a < space.num_arms(); ++a) {
      double mass = nu[space.tuple_index(s, a)];
      if (!space.admissible(s, a)) {
        rep.inadmissible_mass += std::abs(mass);
        continue;
      }
      if (mass == 0.0) continue;
      for (const KernelEntry& e : kern.row(s, a)) inflow[e.next_state] += mass * e.prob;
    }
  for (int s = 0; s < space.n_states(); ++s) {
    double out = 0.0;
    for (int a = 0; a < space.num_arms(); ++a) out += nu[space.tuple_index(s, a)];
    rep.max_flow_residual = std::max(rep.max_flow_residual, std::abs(out - inflow[s]));
  }
  rep.pass = rep.mass_error <= tol && rep.min_entry >= -tol && rep.max_flow_residual <= tol &&
             rep.inadmissible_mass <= tol;
  return rep;
}

}  // namespace restless_bai
