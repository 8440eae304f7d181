#include <omp.h>

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tiltcrm/cli.hpp"
#include "tiltcrm/errors.hpp"
#include "tiltcrm/log.hpp"

using namespace tiltcrm;

int main(int argc, char** argv) {
  CLI::App app{"tiltcrm: tilted gamma-CRM semiparametric GLM"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker threads (default: all cores)")->check(CLI::PositiveNumber);

  cli::FitArgs fit;
  std::uint64_t fit_seed = 0;
  auto* fit_cmd = app.add_subcommand("fit", "fit the model to a CSV data set");
  fit_cmd->add_option("--data", fit.data, "input CSV")->required();
  fit_cmd->add_option("--config", fit.config, "JSON run configuration")->required();
  fit_cmd->add_option("--out", fit.out, "output directory")->required();
  auto* fit_seed_opt = fit_cmd->add_option("--seed", fit_seed, "override the configured seed");
  fit_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  cli::SimulateArgs simulate;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "run the simulation study");
  sim_cmd->add_option("--config", simulate.config, "JSON run configuration")->required();
  sim_cmd->add_option("--out", simulate.out, "output directory")->required();
  auto* sim_seed_opt = sim_cmd->add_option("--seed", sim_seed, "override the configured seed");
  sim_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  cli::PredictArgs predict;
  std::string quantiles = "0.05,0.5,0.95", exceed;
  auto* pred_cmd = app.add_subcommand("predict", "posterior functionals at new covariates");
  pred_cmd->add_option("--draws", predict.draws, "directory written by fit")->required();
  pred_cmd->add_option("--x", predict.x, "CSV of covariate rows")->required();
  pred_cmd->add_option("--out", predict.out, "output directory (default: --draws)");
  pred_cmd->add_option("--quantiles", quantiles, "comma-separated quantile levels");
  pred_cmd->add_option("--exceed", exceed, "comma-separated exceedance thresholds");
  pred_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cli::kExitOk : cli::kExitConfig;
  }

  if (threads > 0) omp_set_num_threads(threads);
  try {
    if (*fit_cmd) {
      if (*fit_seed_opt) fit.seed = fit_seed;
      cli::cmd_fit(fit);
    } else if (*sim_cmd) {
      if (*sim_seed_opt) simulate.seed = sim_seed;
      cli::cmd_simulate(simulate);
    } else if (*pred_cmd) {
      predict.quantiles = cli::parse_list(quantiles, "--quantiles");
      if (!exceed.empty()) predict.exceed = cli::parse_list(exceed, "--exceed");
      cli::cmd_predict(predict);
    }
  } catch (const std::exception& e) {
    log::error(e.what());
    return cli::exit_code_for(e);
  }
  return cli::kExitOk;
}
