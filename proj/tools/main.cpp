#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "restless_bai/cli.hpp"
#include "restless_bai/config.hpp"
#include "restless_bai/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string output_dir = ".";
};

void add_common(CLI::App* sub, CommonArgs& args, bool with_output) {
  sub->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  if (with_output)
    sub->add_option("--output-dir", args.output_dir, "directory for result files");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"restless bandit best-arm identification harness"};
  app.require_subcommand(1);

  CommonArgs family_args, bound_args, sim_args, validate_args;
  int parallelism = 1;
  std::int64_t trials_override = -1;
  double delta_override = -1.0;
  std::int64_t seed_override = -1;

  CLI::App* family = app.add_subcommand("family", "tabulate the tilted family over theta");
  add_common(family, family_args, true);

  CLI::App* bound = app.add_subcommand("lower-bound", "solve the sample-count bound");
  add_common(bound, bound_args, true);

  CLI::App* simulate = app.add_subcommand("simulate", "run stopping-rule trials");
  add_common(simulate, sim_args, true);
  simulate->add_option("--parallel", parallelism, "worker threads")->check(CLI::PositiveNumber);
  simulate->add_option("--trials", trials_override, "override trial count")
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--delta", delta_override, "override the confidence parameter");
  simulate->add_option("--seed", seed_override, "override the master seed")
      ->check(CLI::NonNegativeNumber);

  CLI::App* validate = app.add_subcommand("validate", "run the invariant suite");
  add_common(validate, validate_args, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // app.exit prints the help text or error; fold CLI11's assorted usage
    // codes into the validation exit so consumers see only 0/1/2/3.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (family->parsed()) {
      auto cfg = restless_bai::parse_config(family_args.config_path);
      return restless_bai::cmd_family(cfg, family_args.output_dir);
    }
    if (bound->parsed()) {
      auto cfg = restless_bai::parse_config(bound_args.config_path);
      return restless_bai::cmd_lower_bound(cfg, bound_args.output_dir);
    }
    if (simulate->parsed()) {
      auto cfg = restless_bai::parse_config(sim_args.config_path);
      if (trials_override >= 0) cfg.trials = trials_override;
      if (delta_override > 0.0) {
        if (delta_override >= 1.0) throw restless_bai::ConfigError("delta", "must lie in (0, 1)");
        cfg.delta = delta_override;
      }
      if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
      return restless_bai::cmd_simulate(cfg, sim_args.output_dir, parallelism);
    }
    auto cfg = restless_bai::parse_config(validate_args.config_path);
    return restless_bai::cmd_validate(cfg);
  } catch (const restless_bai::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const restless_bai::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
