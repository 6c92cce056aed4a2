#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "restless_bai/errors.hpp"
#include "restless_bai/exp_family.hpp"
#include "restless_bai/mdp.hpp"
#include "restless_bai/policy.hpp"
#include "restless_bai/rng.hpp"

namespace restless_bai {

// Ground truth for a simulation: the family plus one parameter per arm.
struct TrueInstance {
  Generator gen;
  std::vector<double> theta;
  std::vector<ArmModel> arms;
  int best_arm = -1;
};

inline TrueInstance make_instance(Generator gen, std::vector<double> theta) {
  validate_family(gen);
  if (theta.size() < 2) throw ValidationError("instance: need at least two arms");
  TrueInstance inst;
  for (double th : theta) {
    if (th < gen.theta_min || th > gen.theta_max)
      throw ValidationError("instance: arm parameter outside the family interval");
    inst.arms.push_back(arm_model(gen, th));
  }
  inst.best_arm = unique_best_arm(inst.arms, 1e-12);
  inst.gen = std::move(gen);
  inst.theta = std::move(theta);
  return inst;
}

// Tracked segment of one trial: the state at the end of warm-up, then one
// (action, next state) per observation.
struct Trajectory {
  int initial_state = -1;
  std::vector<int> actions;
  std::vector<int> states;  // length actions.size() + 1, states[0] == initial_state
};

struct FlowAuditReport {
  // Worst absolute mismatch between state visits and warm-up indicator plus
  // arrivals, over all states; exact bookkeeping makes this zero.
  std::int64_t max_violation = 0;
  bool pass = false;
};

// Conservation check on a recorded trajectory: every visit to a state is
// either the warm-up landing or the arrival of a recorded transition.
inline FlowAuditReport flow_audit(const StateSpace& space, const Trajectory& traj) {
  if (traj.states.empty() || traj.states[0] != traj.initial_state ||
      traj.states.size() != traj.actions.size() + 1)
    throw ValidationError("flow_audit: malformed trajectory");
  std::vector<std::int64_t> visits(space.n_states(), 0), arrivals(space.n_states(), 0);
  for (std::size_t t = 0; t + 1 < traj.states.size(); ++t) visits[traj.states[t]] += 1;
  // The state reached by the final observation is not a visit yet: no action
  // was taken there.
  for (std::size_t t = 1; t + 1 < traj.states.size(); ++t) arrivals[traj.states[t]] += 1;
  FlowAuditReport rep;
  for (int s = 0; s < space.n_states(); ++s) {
    std::int64_t expect = (s == traj.initial_state ? 1 : 0) + arrivals[s];
    rep.max_violation = std::max(rep.max_violation, std::abs(visits[s] - expect));
  }
  rep.pass = rep.max_violation == 0;
  return rep;
}

struct Snapshot {
  std::int64_t n = 0;                 // observation index of the snapshot
  std::vector<double> proportions;    // tuple visit shares at that index
};

struct TrialRecord {
  std::uint64_t trial_seed = 0;
  std::int64_t tau = -1;  // index of the stopping observation
  int recommended = -1;
  bool correct = false;
  bool censored = false;
  std::vector<Snapshot> snapshots;
  Trajectory trajectory;  // filled only on request
};

struct TrialOptions {
  bool record_trajectory = false;
  std::vector<std::int64_t> snapshot_times;
  bool disable_stopping = false;  // run to max_steps regardless of the test
};

inline TrialRecord run_trial(const TrueInstance& inst, const StateSpace& space,
                             const PolicyConfig& cfg, std::uint64_t master_seed,
                             std::uint64_t trial_index, const TrialOptions& opts = {}) {
  const int k = space.num_arms();
  if (static_cast<int>(inst.arms.size()) != k)
    throw ValidationError("run_trial: instance arm count mismatch");
  if (cfg.max_steps < k) throw ValidationError("run_trial: step budget below warm-up length");

  std::mt19937_64 arm_rng = make_engine(master_seed, trial_index, Stream::kArmNoise);
  std::mt19937_64 policy_rng = make_engine(master_seed, trial_index, Stream::kPolicy);
  std::mt19937_64 tie_rng = make_engine(master_seed, trial_index, Stream::kTieBreak);
  std::mt19937_64 init_rng = make_engine(master_seed, trial_index, Stream::kInitState);

  // Hidden chains start at stationarity, so an observation after delay d is an
  // exact d-step transition from the previous one, warm-up included.
  std::vector<int> hidden(k);
  for (int a = 0; a < k; ++a)
    hidden[a] = sample_index(inst.arms[a].stationary(), uniform01(init_rng));

  RstlDtrack policy(inst.gen, space, cfg);
  TrialRecord rec;
  rec.trial_seed = mix_seed(master_seed, trial_index);

  std::vector<std::int64_t> snap_times(opts.snapshot_times);
  std::sort(snap_times.begin(), snap_times.end());
  std::size_t next_snap = 0;
  while (true) {
    int arm = policy.select_action(policy_rng);
    policy.observe(arm, hidden[arm]);
    for (int b = 0; b < k; ++b)
      hidden[b] = sample_index(inst.arms[b].tpm().row(hidden[b]), uniform01(arm_rng));

    std::int64_t n = policy.time() - 1;  // index of the observation just made
    if (opts.record_trajectory && policy.time() >= k) {
      if (policy.time() == k) {
        rec.trajectory.initial_state = policy.current_state();
        rec.trajectory.states.push_back(policy.current_state());
      } else {
        rec.trajectory.actions.push_back(arm);
        rec.trajectory.states.push_back(policy.current_state());
      }
    }
    while (next_snap < snap_times.size() && n == snap_times[next_snap]) {
      Snapshot snap;
      snap.n = n;
      snap.proportions.resize(space.n_tuples());
      double scale = 1.0 / static_cast<double>(n - k + 1);
      for (int t = 0; t < space.n_tuples(); ++t)
        snap.proportions[t] = static_cast<double>(policy.tuple_counts()[t]) * scale;
      rec.snapshots.push_back(std::move(snap));
      ++next_snap;
    }
    if (!opts.disable_stopping) {
      RstlDtrack::Decision dec = policy.stopping_decision(tie_rng);
      if (dec.stop) {
        rec.tau = n;
        rec.recommended = dec.recommended;
        rec.correct = dec.recommended == inst.best_arm;
        return rec;
      }
    }
    if (n >= cfg.max_steps) {
      rec.tau = cfg.max_steps;
      rec.censored = true;
      return rec;
    }
  }
}

struct RunStats {
  std::int64_t trials = 0;
  std::int64_t errors = 0;
  std::int64_t censored = 0;
  double error_rate = std::numeric_limits<double>::quiet_NaN();
  double mean_tau = std::numeric_limits<double>::quiet_NaN();
  double mean_tau_over_log_inv_delta = std::numeric_limits<double>::quiet_NaN();
  // Filled when the instance's characteristic rates are supplied.
  double t_star = std::numeric_limits<double>::quiet_NaN();
  double t_unif = std::numeric_limits<double>::quiet_NaN();
  double denominator = std::numeric_limits<double>::quiet_NaN();
  double ratio = std::numeric_limits<double>::quiet_NaN();
};

inline RunStats aggregate(const std::vector<TrialRecord>& records, double delta, double eta_mix,
                          double t_star_value = std::numeric_limits<double>::quiet_NaN(),
                          double t_unif_value = std::numeric_limits<double>::quiet_NaN()) {
  RunStats st;
  st.trials = static_cast<std::int64_t>(records.size());
  double tau_sum = 0.0;
  std::int64_t tau_n = 0;
  for (const TrialRecord& r : records) {
    if (r.censored) {
      ++st.censored;
      continue;
    }
    tau_sum += static_cast<double>(r.tau);
    ++tau_n;
    if (!r.correct) ++st.errors;
  }
  if (tau_n > 0) {
    st.error_rate = static_cast<double>(st.errors) / static_cast<double>(tau_n);
    st.mean_tau = tau_sum / static_cast<double>(tau_n);
    st.mean_tau_over_log_inv_delta = st.mean_tau / std::log(1.0 / delta);
  }
  if (std::isfinite(t_star_value) && std::isfinite(t_unif_value)) {
    st.t_star = t_star_value;
    st.t_unif = t_unif_value;
    st.denominator = eta_mix * t_unif_value + (1.0 - eta_mix) * t_star_value;
    if (tau_n > 0) st.ratio = st.mean_tau * st.denominator / std::log(1.0 / delta);
  }
  return st;
}

// Trials are independent and indexed; workers pull indices from a shared
// counter and write into preallocated slots, so results and their order never
// depend on the degree of parallelism.
inline std::vector<TrialRecord> run_batch(const TrueInstance& inst, const StateSpace& space,
                                          const PolicyConfig& cfg, int trials,
                                          std::uint64_t master_seed, int parallelism,
                                          const TrialOptions& opts = {}) {
  if (trials < 0) throw ValidationError("run_batch: negative trial count");
  for (const ArmModel& arm : inst.arms) arm.tpm_power(space.max_delay());
  std::vector<TrialRecord> records(trials);
  int workers = std::max(1, std::min(parallelism, trials));
  if (workers == 1) {
    for (int i = 0; i < trials; ++i)
      records[i] = run_trial(inst, space, cfg, master_seed, i, opts);
    return records;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      while (true) {
        int i = next.fetch_add(1);
        if (i >= trials) break;
        records[i] = run_trial(inst, space, cfg, master_seed, i, opts);
      }
    });
  for (std::thread& th : pool) th.join();
  return records;
}

// Fixed-rule simulator for calibration checks: no estimation, no stopping,
// just the chain under a given selection rule. Returns tuple visit counts
// for tracked observations K..n_steps.
inline std::vector<std::int64_t> simulate_fixed_rule(const TrueInstance& inst,
                                                     const StateSpace& space,
                                                     const SrsPolicy& pol,
                                                     std::int64_t n_steps,
                                                     std::uint64_t master_seed,
                                                     std::uint64_t trial_index) {
  const int k = space.num_arms();
  validate_policy(space, pol);
  std::mt19937_64 arm_rng = make_engine(master_seed, trial_index, Stream::kArmNoise);
  std::mt19937_64 policy_rng = make_engine(master_seed, trial_index, Stream::kPolicy);
  std::mt19937_64 init_rng = make_engine(master_seed, trial_index, Stream::kInitState);
  std::vector<int> hidden(k);
  for (int a = 0; a < k; ++a)
    hidden[a] = sample_index(inst.arms[a].stationary(), uniform01(init_rng));

  std::vector<std::int64_t> counts(space.n_tuples(), 0);
  std::vector<int> warm_obs(k, -1), delays(k);
  int state = -1;
  for (std::int64_t t = 0; t <= n_steps; ++t) {
    int arm;
    if (t < k) {
      arm = static_cast<int>(t);
    } else if (space.forced_arm(state) >= 0) {
      arm = space.forced_arm(state);
    } else {
      arm = sample_index(pol.probs.row(state), uniform01(policy_rng));
    }
    int obs = hidden[arm];
    if (t < k) {
      warm_obs[arm] = obs;
      if (t == k - 1) {
        for (int a = 0; a < k; ++a) delays[a] = k - a;
        state = space.index_of(delays, warm_obs);
      }
    } else {
      counts[space.tuple_index(state, arm)] += 1;
      state = space.successor(state, arm, obs);
    }
    for (int b = 0; b < k; ++b)
      hidden[b] = sample_index(inst.arms[b].tpm().row(hidden[b]), uniform01(arm_rng));
  }
  return counts;
}

}  // namespace restless_bai
