#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "restless_bai/errors.hpp"
#include "restless_bai/exp_family.hpp"
#include "restless_bai/mdp.hpp"
#include "restless_bai/oracle.hpp"
#include "restless_bai/policy.hpp"

namespace restless_bai {

// One experiment, fully resolved: every optional field carries its final
// value, so the struct can be re-serialized and re-run bit for bit.
struct ExperimentConfig {
  Generator gen;
  std::vector<double> theta;
  int max_delay = 0;
  double eta_mix = 0.5;
  double delta = 0.1;
  double epsilon_exponent = 0.0;
  int update_period = 50;
  int check_period = 1;
  std::int64_t max_steps = 1000000;
  int trials = 100;
  std::uint64_t seed = 1;
  int family_samples = 101;
  double solver_tol = 1e-6;
  int solver_max_iter = 20000;
  int n_states = 0;  // derived from (arms, max_delay, chain states)

  int num_arms() const { return static_cast<int>(theta.size()); }

  MdpConfig mdp_config() const {
    return MdpConfig{num_arms(), max_delay, gen.n_states()};
  }

  SolverConfig solver_config() const {
    SolverConfig s;
    s.tol = solver_tol;
    s.max_iter = solver_max_iter;
    return s;
  }

  PolicyConfig policy_config() const {
    PolicyConfig p;
    p.delta = delta;
    p.eta_mix = eta_mix;
    p.epsilon_exponent = epsilon_exponent;
    p.update_period = update_period;
    p.check_period = check_period;
    p.max_steps = max_steps;
    return p;
  }
};

namespace detail {

inline double as_number(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

inline std::int64_t as_integer(const nlohmann::json& j, const std::string& field) {
  if (!j.is_number_integer()) throw ConfigError(field, "expected an integer");
  return j.get<std::int64_t>();
}

inline std::vector<double> as_number_vector(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(as_number(v, field));
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config_json(const nlohmann::json& root) {
  if (!root.is_object()) throw ConfigError("config", "top level must be an object");
  static const std::set<std::string> known = {
      "generator",     "reward",      "theta_interval", "theta",
      "max_delay",     "eta",         "delta",          "epsilon_exponent",
      "update_period", "check_period", "max_steps",     "trials",
      "seed",          "family_samples", "solver"};
  for (const auto& item : root.items())
    if (!known.count(item.key())) throw ConfigError(item.key(), "unknown field");
  for (const char* req : {"generator", "reward", "theta_interval", "theta", "max_delay",
                          "eta", "delta"})
    if (!root.contains(req)) throw ConfigError(req, "missing required field");

  ExperimentConfig cfg;

  const auto& gj = root.at("generator");
  if (!gj.is_array() || gj.empty()) throw ConfigError("generator", "expected a matrix");
  const int n = static_cast<int>(gj.size());
  cfg.gen.transition = Matrix(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> row = detail::as_number_vector(gj.at(i), "generator");
    if (static_cast<int>(row.size()) != n) throw ConfigError("generator", "matrix is not square");
    for (int j = 0; j < n; ++j) cfg.gen.transition(i, j) = row[j];
  }
  cfg.gen.reward = detail::as_number_vector(root.at("reward"), "reward");
  if (static_cast<int>(cfg.gen.reward.size()) != n)
    throw ConfigError("reward", "length must match the generator size");

  std::vector<double> interval = detail::as_number_vector(root.at("theta_interval"), "theta_interval");
  if (interval.size() != 2 || !(interval[0] < interval[1]))
    throw ConfigError("theta_interval", "expected [low, high] with low < high");
  cfg.gen.theta_min = interval[0];
  cfg.gen.theta_max = interval[1];

  try {
    validate_family(cfg.gen);
  } catch (const ValidationError& e) {
    throw ConfigError("generator", e.what());
  }

  cfg.theta = detail::as_number_vector(root.at("theta"), "theta");
  if (cfg.theta.size() < 2) throw ConfigError("theta", "need at least two arms");
  for (double th : cfg.theta)
    if (th < cfg.gen.theta_min || th > cfg.gen.theta_max)
      throw ConfigError("theta", "arm parameter outside theta_interval");

  cfg.max_delay = static_cast<int>(detail::as_integer(root.at("max_delay"), "max_delay"));
  if (cfg.max_delay < cfg.num_arms())
    throw ConfigError("max_delay", "must be at least the number of arms");

  cfg.eta_mix = detail::as_number(root.at("eta"), "eta");
  if (cfg.eta_mix <= 0.0 || cfg.eta_mix >= 1.0) throw ConfigError("eta", "must lie in (0,1)");
  cfg.delta = detail::as_number(root.at("delta"), "delta");
  if (cfg.delta <= 0.0 || cfg.delta >= 1.0) throw ConfigError("delta", "must lie in (0,1)");

  StateSpace space(cfg.mdp_config());
  cfg.n_states = space.n_states();
  double beta_cap = 1.0 / (2.0 * (1.0 + cfg.n_states));
  if (root.contains("epsilon_exponent")) {
    cfg.epsilon_exponent = detail::as_number(root.at("epsilon_exponent"), "epsilon_exponent");
    if (cfg.epsilon_exponent <= 0.0 || cfg.epsilon_exponent > beta_cap + 1e-15)
      throw ConfigError("epsilon_exponent",
                        "must lie in (0, 1/(2(1+n_states))] = (0, " + std::to_string(beta_cap) + "]");
  } else {
    cfg.epsilon_exponent = beta_cap;
  }

  if (root.contains("update_period"))
    cfg.update_period = static_cast<int>(detail::as_integer(root.at("update_period"), "update_period"));
  if (cfg.update_period < 1) throw ConfigError("update_period", "must be positive");
  if (root.contains("check_period"))
    cfg.check_period = static_cast<int>(detail::as_integer(root.at("check_period"), "check_period"));
  if (cfg.check_period < 1) throw ConfigError("check_period", "must be positive");
  if (root.contains("max_steps"))
    cfg.max_steps = detail::as_integer(root.at("max_steps"), "max_steps");
  if (cfg.max_steps < cfg.num_arms()) throw ConfigError("max_steps", "below the warm-up length");
  if (root.contains("trials"))
    cfg.trials = static_cast<int>(detail::as_integer(root.at("trials"), "trials"));
  if (cfg.trials < 0) throw ConfigError("trials", "must be nonnegative");
  if (root.contains("seed")) {
    const auto& sj = root.at("seed");
    if (!sj.is_number_integer() || sj.get<std::int64_t>() < 0)
      throw ConfigError("seed", "expected a nonnegative integer");
    cfg.seed = sj.get<std::uint64_t>();
  }
  if (root.contains("family_samples")) {
    cfg.family_samples =
        static_cast<int>(detail::as_integer(root.at("family_samples"), "family_samples"));
    if (cfg.family_samples < 2) throw ConfigError("family_samples", "need at least two samples");
  }
  if (root.contains("solver")) {
    const auto& sj = root.at("solver");
    if (!sj.is_object()) throw ConfigError("solver", "expected an object");
    for (const auto& item : sj.items())
      if (item.key() != "tol" && item.key() != "max_iter")
        throw ConfigError("solver." + item.key(), "unknown field");
    if (sj.contains("tol")) {
      cfg.solver_tol = detail::as_number(sj.at("tol"), "solver.tol");
      if (cfg.solver_tol <= 0.0) throw ConfigError("solver.tol", "must be positive");
    }
    if (sj.contains("max_iter")) {
      cfg.solver_max_iter = static_cast<int>(detail::as_integer(sj.at("max_iter"), "solver.max_iter"));
      if (cfg.solver_max_iter < 0) throw ConfigError("solver.max_iter", "must be nonnegative");
    }
  }

  // The true parameters must single out one best arm.
  std::vector<ArmModel> arms;
  for (double th : cfg.theta) arms.push_back(arm_model(cfg.gen, th));
  try {
    unique_best_arm(arms, 1e-12);
  } catch (const ValidationError& e) {
    throw ConfigError("theta", e.what());
  }
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open " + path);
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config_json(root);
}

// Fully explicit re-serialization; parsing it back reproduces the experiment.
inline nlohmann::ordered_json resolved_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  auto& gj = j["generator"] = nlohmann::ordered_json::array();
  for (int i = 0; i < cfg.gen.n_states(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int k = 0; k < cfg.gen.n_states(); ++k) row.push_back(cfg.gen.transition(i, k));
    gj.push_back(std::move(row));
  }
  j["reward"] = cfg.gen.reward;
  j["theta_interval"] = {cfg.gen.theta_min, cfg.gen.theta_max};
  j["theta"] = cfg.theta;
  j["max_delay"] = cfg.max_delay;
  j["eta"] = cfg.eta_mix;
  j["delta"] = cfg.delta;
  j["epsilon_exponent"] = cfg.epsilon_exponent;
  j["update_period"] = cfg.update_period;
  j["check_period"] = cfg.check_period;
  j["max_steps"] = cfg.max_steps;
  j["trials"] = cfg.trials;
  j["seed"] = cfg.seed;
  j["family_samples"] = cfg.family_samples;
  j["solver"] = {{"tol", cfg.solver_tol}, {"max_iter", cfg.solver_max_iter}};
  return j;
}

}  // namespace restless_bai
