#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "restless_bai/sim.hpp"

using namespace restless_bai;

namespace {

Generator chain_2x2() {
  Generator gen;
  gen.transition = Matrix(2, 2);
  gen.transition(0, 0) = 0.9; gen.transition(0, 1) = 0.1;
  gen.transition(1, 0) = 0.2; gen.transition(1, 1) = 0.8;
  gen.reward = {0.0, 1.0};
  gen.theta_min = -2.0;
  gen.theta_max = 2.0;
  return gen;
}

struct Fixture {
  Generator gen;
  std::unique_ptr<StateSpace> space;
  TrueInstance inst;
};

Fixture make_fixture(std::vector<double> theta, int max_delay) {
  Fixture fx;
  fx.gen = chain_2x2();
  fx.space = std::make_unique<StateSpace>(
      MdpConfig{static_cast<int>(theta.size()), max_delay, fx.gen.n_states()});
  fx.inst = make_instance(fx.gen, std::move(theta));
  return fx;
}

// The observation behind a recorded transition is recoverable: the successor
// map is injective in the observed state of the selected arm.
int replay_observation(const StateSpace& space, int s, int a, int next) {
  int found = -1;
  for (int o = 0; o < space.arm_states(); ++o)
    if (space.successor(s, a, o) == next) {
      if (found >= 0) throw ValidationError("replay: ambiguous observation");
      found = o;
    }
  if (found < 0) throw ValidationError("replay: transition not reproducible");
  return found;
}

}  // namespace

TEST_CASE("instance construction validates its inputs") {
  Generator gen = chain_2x2();
  CHECK_THROWS_AS(make_instance(gen, {1.0}), ValidationError);
  CHECK_THROWS_AS(make_instance(gen, {1.0, 3.5}), ValidationError);   // outside the interval
  CHECK_THROWS_AS(make_instance(gen, {1.0, 1.0}), ValidationError);   // tied best arm
  TrueInstance inst = make_instance(gen, {0.2, 1.0});
  CHECK(inst.best_arm == 1);
}

TEST_CASE("identical seeds reproduce a trial exactly") {
  Fixture fx = make_fixture({1.0, 0.2}, 2);
  PolicyConfig cfg;
  cfg.delta = 0.2;
  cfg.max_steps = 100000;
  cfg.check_period = 25;
  cfg.update_period = 200;
  TrialOptions opts;
  opts.record_trajectory = true;
  TrialRecord a = run_trial(fx.inst, *fx.space, cfg, 31337, 4, opts);
  TrialRecord b = run_trial(fx.inst, *fx.space, cfg, 31337, 4, opts);
  CHECK(a.trial_seed == mix_seed(31337, 4));
  CHECK(a.tau == b.tau);
  CHECK(a.recommended == b.recommended);
  CHECK(a.correct == b.correct);
  CHECK(a.censored == b.censored);
  CHECK(a.trajectory.initial_state == b.trajectory.initial_state);
  CHECK(a.trajectory.actions == b.trajectory.actions);
  CHECK(a.trajectory.states == b.trajectory.states);
  TrialRecord c = run_trial(fx.inst, *fx.space, cfg, 31337, 5, opts);
  CHECK(a.trajectory.states != c.trajectory.states);
}

TEST_CASE("recorded trajectories satisfy conservation and replay") {
  Fixture fx = make_fixture({1.0, 0.2}, 3);
  PolicyConfig cfg;
  cfg.delta = 0.2;
  cfg.max_steps = 3000;
  cfg.update_period = 500;
  TrialOptions opts;
  opts.record_trajectory = true;
  opts.disable_stopping = true;
  TrialRecord rec = run_trial(fx.inst, *fx.space, cfg, 99, 0, opts);
  REQUIRE(rec.censored);
  FlowAuditReport audit = flow_audit(*fx.space, rec.trajectory);
  CHECK(audit.pass);
  CHECK(audit.max_violation == 0);
  for (std::size_t t = 0; t < rec.trajectory.actions.size(); ++t) {
    int s = rec.trajectory.states[t];
    int a = rec.trajectory.actions[t];
    REQUIRE(fx.space->admissible(s, a));
    replay_observation(*fx.space, s, a, rec.trajectory.states[t + 1]);
  }
}

TEST_CASE("flow audit rejects malformed trajectories") {
  Fixture fx = make_fixture({1.0, 0.2}, 2);
  Trajectory traj;
  CHECK_THROWS_AS(flow_audit(*fx.space, traj), ValidationError);
  traj.initial_state = 0;
  traj.states = {1};  // does not start at the declared initial state
  CHECK_THROWS_AS(flow_audit(*fx.space, traj), ValidationError);
  traj.states = {0, 1};
  CHECK_THROWS_AS(flow_audit(*fx.space, traj), ValidationError);  // missing action
  traj.actions = {0};
  CHECK(flow_audit(*fx.space, traj).pass);
}

TEST_CASE("observation frequencies follow the delayed jump law") {
  Fixture fx = make_fixture({0.6, 0.3}, 3);
  PolicyConfig cfg;
  cfg.max_steps = 60000;
  cfg.update_period = 5000;
  TrialOptions opts;
  opts.record_trajectory = true;
  opts.disable_stopping = true;
  TrialRecord rec = run_trial(fx.inst, *fx.space, cfg, 8675309, 0, opts);

  // Count observations per (arm, delay, last state) cell from the replayed
  // trajectory and compare with the matching power row of the true chain.
  const int ns = fx.gen.n_states();
  std::map<std::tuple<int, int, int>, std::vector<std::int64_t>> cells;
  for (std::size_t t = 0; t < rec.trajectory.actions.size(); ++t) {
    int s = rec.trajectory.states[t];
    int a = rec.trajectory.actions[t];
    int o = replay_observation(*fx.space, s, a, rec.trajectory.states[t + 1]);
    const MdpState& st = fx.space->state(s);
    auto& bucket = cells[{a, st.delays[a], st.last_obs[a]}];
    if (bucket.empty()) bucket.assign(ns, 0);
    bucket[o] += 1;
  }
  int tested = 0;
  for (const auto& [key, counts] : cells) {
    auto [a, d, i] = key;
    std::int64_t n = 0;
    for (std::int64_t c : counts) n += c;
    if (n < 1000) continue;
    std::span<const double> expect = fx.inst.arms[a].tpm_power(d).row(i);
    for (int j = 0; j < ns; ++j) {
      double freq = static_cast<double>(counts[j]) / static_cast<double>(n);
      INFO("arm " << a << " delay " << d << " from " << i << " to " << j << " n " << n);
      CHECK(freq == Catch::Approx(expect[j]).margin(0.05));
    }
    ++tested;
  }
  CHECK(tested >= 6);  // several delay levels actually exercised
}

TEST_CASE("tuple visit shares converge to the forced-chain occupancy") {
  // With the cap at the arm count every state is forced, so one occupancy is
  // shared by all selection rules and the visit shares must approach it.
  Fixture fx = make_fixture({1.0, 0.2}, 2);
  PolicyConfig cfg;
  cfg.max_steps = 100001;
  cfg.update_period = 5000;
  TrialOptions opts;
  opts.disable_stopping = true;
  opts.snapshot_times = {100000, 10000};  // unsorted on purpose
  TrialRecord rec = run_trial(fx.inst, *fx.space, cfg, 271828, 0, opts);
  REQUIRE(rec.snapshots.size() == 2);
  CHECK(rec.snapshots[0].n == 10000);
  CHECK(rec.snapshots[1].n == 100000);

  Kernel kern = build_kernel(*fx.space, fx.inst.arms);
  Occupancy nu = stationary_occupancy(kern, uniform_policy(*fx.space));
  double worst = 0.0;
  for (int t = 0; t < fx.space->n_tuples(); ++t)
    worst = std::max(worst, std::abs(rec.snapshots[1].proportions[t] - nu[t]));
  CHECK(worst <= 0.02);
  // Shares form a distribution over tuples.
  double mass = 0.0;
  for (double v : rec.snapshots[1].proportions) mass += v;
  CHECK(mass == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("worker count never changes batch results") {
  Fixture fx = make_fixture({1.0, 0.2}, 2);
  PolicyConfig cfg;
  cfg.delta = 0.2;
  cfg.max_steps = 100000;
  cfg.check_period = 25;
  cfg.update_period = 200;
  std::vector<TrialRecord> serial = run_batch(fx.inst, *fx.space, cfg, 8, 555, 1);
  std::vector<TrialRecord> threaded = run_batch(fx.inst, *fx.space, cfg, 8, 555, 3);
  REQUIRE(serial.size() == 8);
  REQUIRE(threaded.size() == 8);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    INFO("trial " << i);
    CHECK(serial[i].trial_seed == threaded[i].trial_seed);
    CHECK(serial[i].tau == threaded[i].tau);
    CHECK(serial[i].recommended == threaded[i].recommended);
    CHECK(serial[i].correct == threaded[i].correct);
    CHECK(serial[i].censored == threaded[i].censored);
  }
}

TEST_CASE("wide-gap instances stop quickly and correctly") {
  Fixture fx = make_fixture({1.9, -1.9}, 2);
  PolicyConfig cfg;
  cfg.delta = 0.25;
  cfg.max_steps = 100000;
  TrialRecord rec = run_trial(fx.inst, *fx.space, cfg, 1234, 0);
  CHECK_FALSE(rec.censored);
  CHECK(rec.recommended == 0);
  CHECK(rec.correct);
  CHECK(rec.tau < 5000);
}

TEST_CASE("step cap marks the record censored") {
  Fixture fx = make_fixture({1.0, 0.2}, 2);
  PolicyConfig cfg;
  cfg.max_steps = 50;
  TrialOptions opts;
  opts.disable_stopping = true;
  TrialRecord rec = run_trial(fx.inst, *fx.space, cfg, 7, 0, opts);
  CHECK(rec.censored);
  CHECK(rec.tau == 50);
  CHECK(rec.recommended == -1);
}

TEST_CASE("aggregation summarizes records and skips censored trials") {
  std::vector<TrialRecord> recs(4);
  recs[0].tau = 100; recs[0].correct = true;
  recs[1].tau = 300; recs[1].correct = false;
  recs[2].tau = 200; recs[2].correct = true;
  recs[3].censored = true; recs[3].tau = 999;
  RunStats st = aggregate(recs, 0.1, 0.5, 10.0, 30.0);
  CHECK(st.trials == 4);
  CHECK(st.censored == 1);
  CHECK(st.errors == 1);
  CHECK(st.error_rate == Catch::Approx(1.0 / 3.0));
  CHECK(st.mean_tau == Catch::Approx(200.0));
  CHECK(st.mean_tau_over_log_inv_delta == Catch::Approx(200.0 / std::log(10.0)));
  CHECK(st.denominator == Catch::Approx(0.5 * 30.0 + 0.5 * 10.0));
  CHECK(st.ratio == Catch::Approx(200.0 * 20.0 / std::log(10.0)));

  std::vector<TrialRecord> all_censored(2);
  all_censored[0].censored = all_censored[1].censored = true;
  RunStats empty = aggregate(all_censored, 0.1, 0.5);
  CHECK(empty.censored == 2);
  CHECK(std::isnan(empty.mean_tau));
  CHECK(std::isnan(empty.ratio));
}
