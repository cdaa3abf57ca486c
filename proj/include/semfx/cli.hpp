#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "semfx/error.hpp"
#include "semfx/fit.hpp"

namespace semfx {

enum class OutputFormat { json, csv, table };

struct AnalysisConfig {
  std::string input;
  std::string response;
  std::vector<std::string> covariates;  // empty: every other column
  std::optional<std::pair<double, double>> support;
  bool discrete = false;
  std::optional<std::vector<double>> tau;  // unset: default grid on continuous responses
  int knots = -1;
  int quad_nodes = -1;
  OutputFormat format = OutputFormat::json;
  std::string output;  // empty: stdout
  std::uint64_t seed = 0;
  int grid_size = 101;
  double tol = 1e-6;
  int max_iter = 200;
};

/// Data set described by the config: response, covariates and support.
Dataset load_dataset(const AnalysisConfig& config);
FitConfig fit_config(const AnalysisConfig& config);

std::string cmd_fit(const AnalysisConfig& config);
std::string cmd_effects(const AnalysisConfig& config);
std::string cmd_curve(const AnalysisConfig& config);
std::string cmd_analyze(const AnalysisConfig& config);

struct SimulateConfig {
  std::string scenario;  // preset name or path to a JSON scenario file
  std::optional<int> replicates;
  std::optional<long> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<double>> tau;
  std::vector<std::string> methods = {"aMLE", "MLE"};
  int workers = 0;
  bool keep_estimates = false;
  OutputFormat format = OutputFormat::table;
  std::string output;
};

/// Returns the report in the requested format; with an output path the JSON
/// report is also written next to it.
std::string cmd_simulate(const SimulateConfig& config);

/// 0 success, 1 other failure, 2 usage, 3 parse, 4 convergence, 5 unsupported, 6 numerical.
int exit_code(ErrorKind kind);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace semfx
