#pragma once

// Front end for the tiltcrm tool: JSON run configuration, CSV ingestion,
// and the fit / simulate / predict commands with their CSV outputs.

#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "tiltcrm/dataset.hpp"
#include "tiltcrm/mcmc.hpp"
#include "tiltcrm/simharness.hpp"
#include "tiltcrm/spline.hpp"

namespace tiltcrm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Exit code for an exception thrown by a command.
int exit_code_for(const std::exception& e);

struct OutputOptions {
  std::size_t grid_points = 512;
  std::size_t x_points = 20;
  std::vector<double> quantiles{0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95};
  /// Thresholds for the exceedance surface; empty means 19 equally spaced
  /// interior points of the support.
  std::vector<double> exceed;
};

struct SimulateOptions {
  std::vector<sim::ScenarioKind> scenarios{sim::ScenarioKind::regression};
  std::vector<std::size_t> n{50};
  int replicates = 5;
};

struct RunConfig {
  std::string response = "y";
  std::vector<std::string> covariates;
  /// 0: covariates enter linearly; otherwise a natural spline of this df on
  /// the single covariate.
  int spline_df = 0;
  mcmc::McmcConfig mcmc;
  OutputOptions output;
  SimulateOptions simulate;
};

/// Strict parse: unknown keys and type errors raise ConfigError naming the
/// JSON location (e.g. "/mcmc/thin").
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path);

/// Header row required; responses must lie strictly inside `support`.
Dataset ingest_csv(const std::string& path, const std::string& response,
                   const std::vector<std::string>& covariates, Support support);
/// Full-precision writer; ingest_csv of the result reproduces `data`.
void write_dataset_csv(const Dataset& data, const std::string& path);

/// 6 significant digits, "NA" for NaN, no negative zero.
std::string fmt(double v);

/// Maps raw covariate rows to design rows (intercept first).
struct DesignMap {
  std::vector<std::string> covariates;
  int spline_df = 0;
  tilt::SplineBasis basis;

  static DesignMap fit(const Eigen::MatrixXd& raw, std::vector<std::string> covariates,
                       int spline_df);
  Eigen::MatrixXd build(const Eigen::MatrixXd& raw) const;
  std::vector<std::string> column_names() const;
  nlohmann::json to_json() const;
  static DesignMap from_json(const nlohmann::json& j);
};

struct FitArgs {
  std::string data;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct SimulateArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct PredictArgs {
  std::string draws;
  std::string x;
  std::string out;  // defaults to the draws directory
  std::vector<double> quantiles;
  std::vector<double> exceed;
};

void cmd_fit(const FitArgs& args);
void cmd_simulate(const SimulateArgs& args);
void cmd_predict(const PredictArgs& args);

/// Comma-separated reals, e.g. "0.05,0.5,0.95".
std::vector<double> parse_list(const std::string& text, const std::string& what);

}  // namespace tiltcrm::cli
