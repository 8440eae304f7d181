#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace tiltcrm {

/// Observations: design rows x_i (intercept included when wanted) and
/// responses y_i, with column metadata.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<double> y;
  std::vector<std::string> covariate_names;
  std::string response_name = "y";

  std::size_t n() const { return y.size(); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
};

}  // namespace tiltcrm
