#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prevmrp/schema.hpp"

namespace prevmrp {

/// Column-major unit storage shared by synthetic populations, drawn samples
/// and externally ingested data.
struct UnitRows {
  int n_covariates = 0;
  size_t n_units = 0;
  std::vector<std::vector<double>> x;        // continuous covariate values
  std::vector<std::vector<uint16_t>> level;  // equal-count discretization
  std::vector<std::vector<uint8_t>> bin;     // two-group (median) split, 0/1

  void resize(int k, size_t n);
};

struct PopulationConfig {
  uint64_t n_units = 500000;
  int n_covariates = 5;
  int levels = 20;           // L(k), shared by all covariates
  double zeta1 = 0.0;        // common covariate-outcome slope
  double prevalence = 0.01;  // target E(pi)
  double lower = -0.5;       // uniform bounds for the continuous covariates
  double upper = 0.5;
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  CovariateSchema schema() const;
};

struct Population {
  PopulationConfig config;
  double zeta0 = 0.0;
  UnitRows rows;
  std::vector<double> pi;  // per-unit true probability
  std::vector<uint8_t> y;  // per-unit true status

  double mean_pi() const;
  double mean_y() const;
};

struct Sample {
  UnitRows rows;
  std::vector<uint8_t> y;       // true statuses of the sampled units
  std::vector<uint8_t> y_star;  // observed test results (empty until corrupted)
  std::vector<uint64_t> source_index;

  size_t size() const { return rows.n_units; }
  double mean_y_star() const;
};

/// zeta_0 = logit(pi) - zeta_1 * K * (a + b) / 2.
double solve_intercept(double prevalence, double zeta1, int n_covariates, double lower,
                       double upper);

/// Equal-count quantile bins, 0-based, order preserving; ties broken by stable
/// input order. Bin sizes differ by at most one.
std::vector<uint16_t> discretize(std::span<const double> x, int levels);

Population generate_population(const PopulationConfig& config);

std::vector<uint8_t> corrupt_measurements(std::span<const uint8_t> y, double delta, double gamma,
                                          uint64_t seed);

/// Simple random sample without replacement, rows ordered by population index.
Sample draw_sample(const Population& pop, size_t n, uint64_t seed);

struct ObservableBounds {
  double lo = 0.0;
  double hi = 0.0;
  bool defined = false;  // false exactly when delta == 1 - gamma
};

/// Attainable range of Pr(y* = 1) over pi in [0, 1].
ObservableBounds observable_bounds(double delta, double gamma);

struct SpecificityCounts {
  int64_t fp = 0;
  int64_t tn = 0;
};

/// Expected calibration counts for a specificity study of size m_gamma; the
/// expected false-positive count must be an integer (the published grid
/// guarantees this) or the configuration is rejected.
SpecificityCounts calibration_counts(double gamma_true, int64_t m_gamma);

struct SensitivityCounts {
  int64_t tp = 0;
  int64_t fn = 0;
};

SensitivityCounts sensitivity_calibration_counts(double delta_true, int64_t m_delta);

/// Debug dump: header row, one comma-separated row per unit (continuous X's,
/// levels, y), UTF-8.
void write_population_csv(const std::string& path, const Population& pop);

}  // namespace prevmrp
