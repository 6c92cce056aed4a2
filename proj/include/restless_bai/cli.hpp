#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "restless_bai/config.hpp"
#include "restless_bai/sim.hpp"
#include "restless_bai/validate.hpp"

namespace restless_bai {

enum class LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

inline LogLevel& log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("RESTLESS_BAI_LOG");
    if (!env) return LogLevel::kError;
    std::string s(env);
    if (s == "debug") return LogLevel::kDebug;
    if (s == "info") return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level() >= LogLevel::kInfo) std::cerr << "[info] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
  if (log_level() >= LogLevel::kDebug) std::cerr << "[debug] " << msg << "\n";
}

// Removes registered files if the command exits by exception, so a failed run
// never leaves partial outputs behind.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (armed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      std::filesystem::remove(p, ec);
    }
  }
  void add(const std::filesystem::path& p) { paths_.push_back(p); }
  void commit() { armed_ = true; }

 private:
  std::vector<std::filesystem::path> paths_;
  bool armed_ = false;
};

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw ValidationError("cannot open output file " + p.string());
  return out;
}

inline nlohmann::json json_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

constexpr int kSchemaVersion = 1;

inline nlohmann::json read_versioned_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open " + p.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(p.string() + ": invalid JSON: " + e.what());
  }
  if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
    throw ValidationError(p.string() + ": missing schema_version");
  if (doc["schema_version"].get<int>() != kSchemaVersion)
    throw ValidationError(p.string() + ": unsupported schema_version " +
                          doc["schema_version"].dump());
  return doc;
}

// theta, rho, eta over an even grid on the parameter interval.
inline void write_family_csv(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "theta,rho,eta\n";
  for (std::int64_t i = 0; i < cfg.family_samples; ++i) {
    double th = cfg.gen.theta_min +
                (cfg.gen.theta_max - cfg.gen.theta_min) * i / (cfg.family_samples - 1.0);
    TiltedSpectrum spec = perron(cfg.gen, th);
    double eta = ArmModel(cfg.gen, th, spec).eta();
    out << format_g17(th) << ',' << format_g17(spec.rho) << ',' << format_g17(eta) << '\n';
  }
  if (!out) throw ValidationError("write failed on " + path.string());
}

inline void write_bound_json(const StateSpace& space, const LowerBoundResult& lb,
                             double unif_value, const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["t_star"] = json_or_null(lb.value);
  doc["t_unif"] = json_or_null(unif_value);
  doc["fw_gap"] = lb.fw_gap;
  doc["iterations"] = lb.iterations;
  nlohmann::json entries = nlohmann::json::array();
  for (int s = 0; s < space.n_states(); ++s)
    for (int a = 0; a < space.num_arms(); ++a) {
      double v = lb.nu[space.tuple_index(s, a)];
      if (v > 0.0) entries.push_back({s, a, v});
    }
  doc["nu_star"] = std::move(entries);
  std::ofstream out = open_output(path);
  out << doc.dump(2) << '\n';
  if (!out) throw ValidationError("write failed on " + path.string());
}

inline void write_trials_csv(const std::vector<TrialRecord>& records,
                             const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "trial,seed,tau,recommended,correct,censored\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const TrialRecord& r = records[i];
    out << i << ',' << r.trial_seed << ',' << r.tau << ',' << r.recommended << ','
        << (r.correct ? 1 : 0) << ',' << (r.censored ? 1 : 0) << '\n';
  }
  if (!out) throw ValidationError("write failed on " + path.string());
}

inline void write_summary_json(const ExperimentConfig& cfg, const RunStats& stats,
                               const std::filesystem::path& path) {
  nlohmann::ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["config"] = resolved_json(cfg);
  nlohmann::ordered_json s;
  s["trials"] = stats.trials;
  s["errors"] = stats.errors;
  s["censored"] = stats.censored;
  s["error_rate"] = json_or_null(stats.error_rate);
  s["mean_tau"] = json_or_null(stats.mean_tau);
  s["mean_tau_over_log_inv_delta"] = json_or_null(stats.mean_tau_over_log_inv_delta);
  s["t_star"] = json_or_null(stats.t_star);
  s["t_unif"] = json_or_null(stats.t_unif);
  s["denominator"] = json_or_null(stats.denominator);
  s["ratio"] = json_or_null(stats.ratio);
  doc["stats"] = std::move(s);
  std::ofstream out = open_output(path);
  out << doc.dump(2) << '\n';
  if (!out) throw ValidationError("write failed on " + path.string());
}

inline int cmd_family(const ExperimentConfig& cfg, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  OutputGuard guard;
  auto path = outdir / "family.csv";
  guard.add(path);
  write_family_csv(cfg, path);
  guard.commit();
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

inline int cmd_lower_bound(const ExperimentConfig& cfg, const std::filesystem::path& outdir) {
  StateSpace space(cfg.mdp_config());
  log_info("state space: " + std::to_string(space.n_states()) + " states");
  std::vector<ArmModel> arms;
  for (double th : cfg.theta) arms.push_back(arm_model(cfg.gen, th));
  Kernel kern = build_kernel(space, arms);
  LowerBoundResult lb = t_star(cfg.gen, space, arms, kern, cfg.solver_config());
  log_info("solved in " + std::to_string(lb.iterations) + " iterations, gap " +
           format_g17(lb.fw_gap));
  UnifBoundResult ub = t_unif(cfg.gen, space, arms, kern);
  std::filesystem::create_directories(outdir);
  OutputGuard guard;
  auto path = outdir / "bound.json";
  guard.add(path);
  write_bound_json(space, lb, ub.value, path);
  guard.commit();
  std::cout << "t_star " << format_g17(lb.value) << " t_unif " << format_g17(ub.value)
            << " gap " << format_g17(lb.fw_gap) << "\n";
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

inline int cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& outdir,
                        int parallelism) {
  TrueInstance inst = make_instance(cfg.gen, cfg.theta);
  StateSpace space(cfg.mdp_config());
  Kernel kern = build_kernel(space, inst.arms);
  log_info("solving the sample-count bound for the summary");
  LowerBoundResult lb = t_star(cfg.gen, space, inst.arms, kern, cfg.solver_config());
  UnifBoundResult ub = t_unif(cfg.gen, space, inst.arms, kern);
  log_info("running " + std::to_string(cfg.trials) + " trials");
  std::vector<TrialRecord> records =
      run_batch(inst, space, cfg.policy_config(), cfg.trials, cfg.seed, parallelism);
  RunStats stats = aggregate(records, cfg.delta, cfg.eta_mix, lb.value, ub.value);
  std::filesystem::create_directories(outdir);
  OutputGuard guard;
  auto trials_path = outdir / "trials.csv";
  auto summary_path = outdir / "summary.json";
  guard.add(trials_path);
  guard.add(summary_path);
  write_trials_csv(records, trials_path);
  write_summary_json(cfg, stats, summary_path);
  guard.commit();
  std::cout << "trials " << stats.trials << " errors " << stats.errors << " censored "
            << stats.censored << "\n";
  if (!std::isnan(stats.mean_tau)) std::cout << "mean_tau " << format_g17(stats.mean_tau) << "\n";
  if (!std::isnan(stats.ratio)) std::cout << "ratio " << format_g17(stats.ratio) << "\n";
  std::cout << "wrote " << trials_path.string() << "\n";
  std::cout << "wrote " << summary_path.string() << "\n";
  return 0;
}

inline int cmd_validate(const ExperimentConfig& cfg) {
  std::vector<InvariantResult> results = run_invariant_suite(cfg);
  std::size_t width = 0;
  for (const auto& r : results) width = std::max(width, r.name.size());
  bool all_pass = true;
  for (const auto& r : results) {
    std::string status = r.skipped ? "SKIP" : (r.pass ? "PASS" : "FAIL");
    std::cout << r.name << std::string(width - r.name.size() + 2, ' ') << status;
    if (!r.detail.empty()) std::cout << "  " << r.detail;
    std::cout << "\n";
    if (!r.pass) all_pass = false;
  }
  return all_pass ? 0 : 3;
}

}  // namespace restless_bai
