#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "prevmrp/nuts.hpp"
#include "prevmrp/schema.hpp"

namespace prevmrp {

enum class ExperimentId : uint8_t { Exp1_1, Exp1_2, Exp2_1, Exp2_2, Exp3, Feedback, RealData };

std::string to_string(ExperimentId id);
ExperimentId experiment_from_string(const std::string& name);

struct RealDataConfig {
  std::string sample_csv;
  std::string cells_csv;
  std::vector<Covariate> covariates;
  std::string measurement = "none";  // none | known | estimated_specificity | estimated_both
  double delta = 1.0;
  double gamma = 1.0;
  CalibrationData calibration;

  Measurement build_measurement() const;  // throws ConfigError
};

/// One JSON document drives a whole run; the canonical dump of this document
/// is what gets hashed into the manifest.
struct ExperimentConfig {
  ExperimentId experiment = ExperimentId::Exp1_1;
  int iterations = 100;
  uint64_t master_seed = 1;
  std::string output_dir;

  uint64_t population_size = 500000;
  int n_covariates = 5;

  // Condition grids; validation pins them to the published menus unless
  // allow_off_grid is set.
  std::vector<uint64_t> n_values;
  std::vector<double> pi_values;
  std::vector<double> zeta1_values;
  std::vector<int> level_values;
  std::vector<double> gamma_values;
  std::vector<int64_t> m_gamma_values;

  double delta_true = 1.0;
  int64_t m_delta = 102;
  bool estimate_both = false;

  LadderVariant ladder = LadderVariant::Basic;
  std::vector<int> models{0, 1, 2, 3, 4, 5};

  McmcConfig mcmc;
  bool save_draws = false;
  bool save_population = false;
  double interval_level = 0.9;
  size_t prior_draws = 10000;
  bool allow_off_grid = false;
  int workers = 0;        // 0: PREVMRP_WORKERS env var, else the OpenMP default
  uint64_t max_tasks = 0; // 0: unlimited; smoke/testing aid

  RealDataConfig real_data;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig from_file(const std::string& path);
  nlohmann::json to_json() const;

  /// Empty when the config is runnable; otherwise one message per problem.
  std::vector<std::string> validate() const;

  uint64_t config_hash() const;
  int resolve_workers() const;
};

}  // namespace prevmrp
