#pragma once

// Run configuration for the sofqr tool: YAML file values, then flag overrides.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sofqr/io.hpp"
#include "sofqr/sampler.hpp"
#include "sofqr/simlab.hpp"

namespace sofqr::cli {

struct RunConfig {
  std::string command;

  // data
  std::string functional_path;
  std::string scalar_path;
  std::string out_dir = "sofqr_out";
  std::string run_dir;  // summarize input, defaults to out_dir

  // model
  Estimator estimator = Estimator::Fast;
  std::vector<double> tau0;  // empty: the command's default
  int num_basis = 0;  // 0: chosen from the grid size
  int degree = 3;
  McmcConfig mcmc;
  PriorConfig priors;

  // preprocessing
  bool preprocess = false;
  PreprocessOptions preprocess_options;
  int downsample = 1;

  // summaries
  double level = 0.95;
  int eval_points = 0;  // 0: the data grid

  // simulate
  int sim_case = 1;
  int n_r = 100;
  int threads = 1;
  bool dataset_only = false;
  std::vector<double> scenario_values;  // empty: all scenarios of the case
  std::vector<Estimator> estimators{Estimator::FBQ, Estimator::Fast, Estimator::Naive};
  SimConfig sim;

  /// Throws ValidationError on inconsistent values.
  void validate() const;
};

/// Applies a YAML config file on top of `config`. Unknown keys are errors.
void apply_yaml_file(RunConfig& config, const std::string& path);
void apply_yaml_text(RunConfig& config, const std::string& text);

nlohmann::json to_json(const RunConfig& config);

}  // namespace sofqr::cli
