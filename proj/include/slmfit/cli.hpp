#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "slmfit/fit.hpp"
#include "slmfit/io.hpp"
#include "slmfit/selection.hpp"

namespace slmfit::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNumericError = 3 };

struct ScanConfig {
  ModelKind kind = ModelKind::SEM;
  int k_min = 5;
  int k_max = 35;
  ScanPrior prior = ScanPrior::Uniform;
  std::vector<std::string> bma;  // coefficient or hyperparameter names to average
};

struct RunConfig {
  std::string base_dir;  // relative paths resolve against the config file

  std::string table;
  std::string response;
  std::vector<std::string> covariates;  // empty: every column except the response
  bool intercept = true;

  std::string weights_file;
  std::string points_file;
  int k = 0;
  std::optional<bool> standardize;  // default: keep file weights, standardize kNN
  std::string error_weights_file;   // SDEM only

  std::vector<ModelKind> kinds;
  ModelOptions options;
  GridOptions grid;
  bool impacts = false;
  std::optional<ScanConfig> scan;

  std::string output = "slmfit-out";
  std::uint64_t seed = 1;
  int threads = 0;
};

/// YAML config. Errors carry the line and column of the offending node.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".",
                       const std::string& source = "<config>");

struct Inputs {
  Eigen::VectorXd y;
  Design x;
  std::optional<WeightsMatrix> w;
  std::optional<WeightsMatrix> m;
  std::vector<Point2> coords;
};

Inputs load_inputs(const RunConfig& config, bool need_weights = true);

/// Issues found without fitting. Empty when the inputs are usable.
std::vector<std::string> validate(const RunConfig& config);

io::OutputSet run_fit(const RunConfig& config, bool impacts, std::ostream& log);
io::OutputSet run_scan(const RunConfig& config, std::ostream& log);

/// Verb dispatch with error-to-exit-code mapping; outputs are written only
/// when the whole run succeeds.
int execute(const std::string& verb, const std::string& config_path, std::optional<int> threads,
            std::optional<std::string> output_dir, std::ostream& out, std::ostream& err);

}  // namespace slmfit::cli
