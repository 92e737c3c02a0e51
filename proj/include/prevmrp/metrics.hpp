#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prevmrp/schema.hpp"

namespace prevmrp {

/// Everything identifying one simulation condition. Fields that do not apply
/// to an experiment keep their defaults and still print, so result files have
/// a fixed header.
struct ConditionKey {
  std::string experiment;
  std::string ladder = "basic";
  int model = 0;
  std::string method = "bayes";  // bayes | mle
  uint64_t n = 0;
  double pi = 0.0;
  double zeta1 = 0.0;
  int levels = 0;
  double gamma_true = 1.0;
  int64_t m_gamma = 0;
  double delta_true = 1.0;

  std::string label() const;        // stable, also used to derive seeds
  std::string group_label() const;  // label without the model/method part
};

struct IterationResult {
  ConditionKey key;
  int iteration = 0;

  double pi_hat_median = 0.0;
  double pi_hat_mean = 0.0;
  double pi_s_median = 0.0;   // posterior predictive sample mean
  double pi_s_mean = 0.0;
  double beta0_median = 0.0;
  double pr_ystar_median = 0.0;
  double gamma_median = 0.0;  // NaN when not estimated
  double delta_median = 0.0;  // NaN when not estimated
  double sample_test_prev = 0.0;

  bool has_truth = true;
  double true_pi = 0.0;
  double true_beta0 = 0.0;

  uint64_t divergences = 0;
  double max_rhat = 0.0;
  double min_ess = 0.0;
  bool warn_divergence = false;
  bool warn_rhat = false;
  std::string mle_status;  // empty for Bayesian fits
};

struct MetricValues {
  double bias_pi = 0.0;
  double bias_beta0 = 0.0;
  double delta_pi = 0.0;
  bool available = false;  // false in real-data mode (no truth)
};

/// bias_pi = pi_hat - pi, bias_beta0 = beta0_hat - zeta0, and
/// delta_pi = pi_hat - Pr(y* = 1) against the analytic population value
/// (1 - gamma_true)(1 - pi) + delta_true * pi.
MetricValues compute_metrics(const IterationResult& r);

double analytic_test_prevalence(double pi, double delta_true, double gamma_true);

/// Tukey box statistics plus mean and its Monte Carlo standard error.
/// Quartiles use type-7 interpolation; whiskers are the most extreme values
/// within 1.5 IQR of the quartiles.
struct BoxSummary {
  size_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;
  double whisker_hi = 0.0;
  size_t n_outliers = 0;
  double mean = 0.0;
  double mc_se = 0.0;
};

BoxSummary summarize_values(std::vector<double> values);

struct ConditionSummary {
  ConditionKey key;
  std::string metric;
  BoxSummary box;
};

/// One summary row per (condition, metric); conditions ordered by first
/// appearance, NaN metric values skipped, empty groups dropped.
std::vector<ConditionSummary> aggregate(const std::vector<IterationResult>& results);

}  // namespace prevmrp
