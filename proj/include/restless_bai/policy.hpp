#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "restless_bai/errors.hpp"
#include "restless_bai/exp_family.hpp"
#include "restless_bai/mdp.hpp"
#include "restless_bai/oracle.hpp"
#include "restless_bai/rng.hpp"

namespace restless_bai {

struct PolicyConfig {
  double delta = 0.1;
  double eta_mix = 0.5;            // weight of the uniform-rule occupancy in the tracked target
  double epsilon_exponent = 0.0;   // forced-exploration decay; <= 0 resolves the default
  int update_period = 50;          // tracked observations between target refreshes
  int check_period = 1;            // observations between stopping checks
  std::int64_t max_steps = 1000000;
  SolverConfig solver{0.001, 300, {}, {}};  // in-run target refreshes tolerate laxity
  InnerOptions inner;                       // test-statistic evaluation
};

// Track-and-stop controller for the delay MDP: warm-up round robin, then
// sampling from an exploration-mixed tracking rule, with a generalized
// likelihood-ratio stopping test against the confusing alternatives.
class RstlDtrack {
 public:
  RstlDtrack(const Generator& gen, const StateSpace& space, const PolicyConfig& cfg)
      : gen_(&gen), space_(&space), cfg_(cfg), cache_(gen) {
    const int k = space.num_arms(), s = space.arm_states();
    if (cfg_.delta <= 0.0 || cfg_.delta >= 1.0)
      throw ValidationError("policy: confidence level must lie in (0,1)");
    if (cfg_.eta_mix <= 0.0 || cfg_.eta_mix >= 1.0)
      throw ValidationError("policy: mixing weight must lie in (0,1)");
    double beta_cap = 1.0 / (2.0 * (1.0 + space.n_states()));
    beta_ = cfg_.epsilon_exponent > 0.0 ? cfg_.epsilon_exponent : beta_cap;
    if (beta_ > beta_cap + 1e-15)
      throw ValidationError("policy: exploration exponent above the admissible cap");
    if (cfg_.update_period < 1 || cfg_.check_period < 1)
      throw ValidationError("policy: periods must be positive");
    warm_obs_.assign(k, -1);
    counts_.assign(space.n_tuples(), 0);
    trans_counts_.assign(static_cast<std::size_t>(space.n_tuples()) * s, 0);
    obs_count_.assign(k, 0);
    reward_sum_.assign(k, 0.0);
    eta_hat_.assign(k, 0.0);
    theta_hat_.assign(k, 0.0);
    theta_stale_.assign(k, 1);
  }

  const PolicyConfig& config() const { return cfg_; }
  int num_arms() const { return space_->num_arms(); }
  std::int64_t time() const { return t_; }  // observations completed so far
  bool warmed_up() const { return t_ >= num_arms(); }
  int current_state() const { return state_; }
  double eta_hat(int a) const { return eta_hat_[a]; }

  // Inverted lazily: the inversion is a bisection and only target refreshes
  // and readers need it, not every observation.
  double theta_hat(int a) const {
    if (theta_stale_[a]) {
      theta_hat_[a] = mean_to_theta(*gen_, eta_hat_[a]);
      theta_stale_[a] = 0;
    }
    return theta_hat_[a];
  }
  double exploration_exponent() const { return beta_; }
  const std::vector<std::int64_t>& tuple_counts() const { return counts_; }
  const Occupancy& tracked_target() const { return nu_star_; }
  const Occupancy& uniform_target() const { return nu_unif_; }

  // Empirical transition law of a tuple; untouched tuples get the flat
  // placeholder (which no statistic ever consumes, zero-count tuples carry
  // zero weight).
  std::vector<double> empirical_row(int s, int a) const {
    const int ns = space_->arm_states();
    int tuple = space_->tuple_index(s, a);
    std::vector<double> row(ns, 1.0 / ns);
    if (counts_[tuple] == 0) return row;
    for (int j = 0; j < ns; ++j)
      row[j] = static_cast<double>(trans_counts_[static_cast<std::size_t>(tuple) * ns + j]) /
               counts_[tuple];
    return row;
  }

  // Selection probabilities at the current state for the upcoming step.
  std::vector<double> action_distribution() const {
    const int k = num_arms();
    if (t_ < k) {
      std::vector<double> probs(k, 0.0);
      probs[t_] = 1.0;
      return probs;
    }
    int forced = space_->forced_arm(state_);
    std::vector<double> probs(k, 0.0);
    if (forced >= 0) {
      probs[forced] = 1.0;
      return probs;
    }
    double eps = std::pow(static_cast<double>(t_), -beta_);
    double den = 0.0;
    std::vector<double> num(k, 0.0);
    for (int a = 0; a < k; ++a) {
      int tuple = space_->tuple_index(state_, a);
      num[a] = cfg_.eta_mix * nu_unif_[tuple] + (1.0 - cfg_.eta_mix) * nu_star_[tuple];
      den += num[a];
    }
    for (int a = 0; a < k; ++a)
      probs[a] = eps / k + (1.0 - eps) * num[a] / den;
    return probs;
  }

  // Warm-up is a fixed round robin and consumes no randomness; so do forced
  // states, so the draw sequence is identical across stopping cadences.
  int select_action(std::mt19937_64& policy_rng) {
    const int k = num_arms();
    if (t_ < k) return static_cast<int>(t_);
    int forced = space_->forced_arm(state_);
    if (forced >= 0) return forced;
    std::vector<double> probs = action_distribution();
    return sample_index(probs, uniform01(policy_rng));
  }

  void observe(int arm, int obs) {
    const int k = num_arms(), ns = space_->arm_states();
    if (arm < 0 || arm >= k || obs < 0 || obs >= ns)
      throw ValidationError("policy observe: bad arm or observation");
    reward_sum_[arm] += gen_->reward[obs];
    obs_count_[arm] += 1;
    eta_hat_[arm] = reward_sum_[arm] / obs_count_[arm];
    theta_stale_[arm] = 1;
    if (t_ < k) {
      warm_obs_[arm] = obs;
      ++t_;
      if (t_ == k) {
        std::vector<int> delays(k);
        for (int a = 0; a < k; ++a) delays[a] = k - a;
        state_ = space_->index_of(delays, warm_obs_);
        refresh_targets();
      }
      return;
    }
    int tuple = space_->tuple_index(state_, arm);
    counts_[tuple] += 1;
    trans_counts_[static_cast<std::size_t>(tuple) * ns + obs] += 1;
    state_ = space_->successor(state_, arm, obs);
    ++t_;
    if ((t_ - k) % cfg_.update_period == 0) refresh_targets();
  }

  // A stopping check runs after the tracked observation at index n when
  // n is a multiple of check_period.
  bool check_due() const {
    std::int64_t n = t_ - 1;
    return n >= num_arms() && n % cfg_.check_period == 0;
  }

  int best_arm_estimate() const {
    int best = 0;
    for (int a = 1; a < num_arms(); ++a)
      if (eta_hat_[a] > eta_hat_[best]) best = a;
    return best;
  }

  // Generalized likelihood ratio against the closest confusing instance,
  // evaluated on the empirical transition laws.
  double test_statistic() {
    const int k = num_arms(), ns = space_->arm_states();
    std::vector<ArmEvidence> evidence(k);
    for (int s = 0; s < space_->n_states(); ++s) {
      const MdpState& st = space_->state(s);
      for (int a = 0; a < k; ++a) {
        int tuple = space_->tuple_index(s, a);
        if (counts_[tuple] == 0) continue;
        EvidenceRow row;
        row.tuple = tuple;
        row.weight = static_cast<double>(counts_[tuple]);
        row.delay = st.delays[a];
        row.from = st.last_obs[a];
        row.target.resize(ns);
        for (int j = 0; j < ns; ++j)
          row.target[j] =
              static_cast<double>(trans_counts_[static_cast<std::size_t>(tuple) * ns + j]) /
              counts_[tuple];
        row.self_entropy = row_self_entropy(row.target);
        evidence[a].rows.push_back(std::move(row));
      }
    }
    return alt_infimum(*gen_, evidence, best_arm_estimate(), cfg_.inner, cache_).value;
  }

  // Deviation allowance: one log-confidence term plus a per-tuple price that
  // every (state, arm) pair pays, visited or not.
  double threshold() const {
    const double denom = space_->n_states() - 1;
    double sum = static_cast<double>(space_->n_states()) * num_arms();
    for (std::int64_t c : counts_)
      if (c > 0) sum += std::log1p(static_cast<double>(c) / denom);
    return std::log(1.0 / cfg_.delta) + denom * sum;
  }

  int recommend(std::mt19937_64& tie_rng) const {
    int best = best_arm_estimate();
    std::vector<int> tied;
    for (int a = 0; a < num_arms(); ++a)
      if (eta_hat_[best] - eta_hat_[a] <= 1e-12) tied.push_back(a);
    if (tied.size() == 1) return tied[0];
    std::size_t pick = static_cast<std::size_t>(uniform01(tie_rng) * tied.size());
    return tied[std::min(pick, tied.size() - 1)];
  }

  struct Decision {
    bool stop = false;
    int recommended = -1;
  };

  Decision stopping_decision(std::mt19937_64& tie_rng) {
    if (!check_due()) return {};
    if (test_statistic() < threshold()) return {};
    return {true, recommend(tie_rng)};
  }

 private:
  void refresh_targets() {
    const int k = num_arms();
    std::vector<ArmModel> hat;
    hat.reserve(k);
    for (int a = 0; a < k; ++a) hat.push_back(arm_model(*gen_, theta_hat(a)));
    Kernel kern = build_kernel(*space_, hat);
    nu_unif_ = stationary_occupancy(kern, uniform_policy(*space_));
    LowerBoundResult lb = t_star(*gen_, *space_, hat, kern, cfg_.solver,
                                 have_targets_ ? &nu_star_ : nullptr, best_arm_estimate());
    nu_star_ = lb.nu;
    have_targets_ = true;
  }

  const Generator* gen_;
  const StateSpace* space_;
  PolicyConfig cfg_;
  TiltedModelCache cache_;
  double beta_ = 0.0;

  std::int64_t t_ = 0;
  int state_ = -1;
  std::vector<int> warm_obs_;
  std::vector<std::int64_t> counts_;
  std::vector<std::int64_t> trans_counts_;
  std::vector<std::int64_t> obs_count_;
  std::vector<double> reward_sum_, eta_hat_;
  mutable std::vector<double> theta_hat_;
  mutable std::vector<char> theta_stale_;
  Occupancy nu_unif_, nu_star_;
  bool have_targets_ = false;
};

}  // namespace restless_bai
