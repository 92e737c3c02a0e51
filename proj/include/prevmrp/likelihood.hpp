#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prevmrp/cells.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/schema.hpp"

namespace prevmrp {

// Parameter vector layout. Unconstrained and constrained vectors share
// positions; the transform is elementwise:
//   beta terms      identity
//   varying effects non-centered z  <->  alpha = sigma * z
//   group sd        log(sigma)      <->  sigma
//   delta, gamma    logit           <->  probability
struct VaryingBlock {
  int covariate = -1;
  int levels = 0;
  int z_offset = 0;     // first z (alpha) position
  int sigma_index = 0;  // log-sigma (sigma) position
};

struct SlopeEntry {
  int covariate = -1;
  SlopeSource source = SlopeSource::Continuous;
  int index = 0;
};

struct ParamLayout {
  int beta0 = 0;
  std::vector<SlopeEntry> slopes;
  std::vector<VaryingBlock> varying;
  int delta_index = -1;  // -1 when sensitivity is fixed
  int gamma_index = -1;  // -1 when specificity is fixed
  int n_params = 0;
  std::vector<std::string> names;  // constrained-scale names

  static ParamLayout build(const ModelSpec& spec, const CovariateSchema& schema);
};

/// Per-row sufficient statistics for the observation model: sample units
/// grouped by identical (varying levels, slope values). Collapses to binomial
/// counts whenever units are exchangeable under the spec.
struct LikelihoodData {
  int n_varying = 0;
  int n_slopes = 0;
  size_t n_rows = 0;
  std::vector<uint16_t> levels;   // n_rows x n_varying, row-major
  std::vector<double> slopes;     // n_rows x n_slopes, row-major
  std::vector<double> trials;
  std::vector<double> successes;

  static LikelihoodData build(const Sample& sample, const ModelSpec& spec,
                              const CovariateSchema& schema);
  static LikelihoodData empty(const ModelSpec& spec);

  double total_trials() const;
  double total_successes() const;
};

/// Scratch buffers for gradient evaluation; one per chain/thread.
struct GradWorkspace {
  std::vector<double> block_acc;  // n_blocks x n_params partial gradients
  std::vector<double> block_ll;
  std::vector<double> block_dgamma;
  std::vector<double> block_ddelta;
};

/// Joint unnormalized log posterior on the unconstrained scale, with analytic
/// gradients. Immutable and reentrant; all scratch lives in GradWorkspace.
///
/// Likelihood: y*_r ~ binomial(m_r, p*_r), p* = (1-gamma)(1-pi) + delta * pi,
/// pi = logit^{-1}(beta0 + sum_q beta_q x_q + sum_k alpha_k[l]).
/// Priors: beta0, beta_q ~ t_3(0, 2.5); alpha = sigma * z, z ~ normal(0, 1);
/// sigma ~ half-t_3(0, 2.5); delta ~ beta(TP, FN), gamma ~ beta(TN, FP) when
/// estimated. A zero failure count in the calibration data would make the
/// beta prior improper, so that evidence enters as a binomial likelihood
/// under a uniform base prior instead (beta(successes + 1, 1)).
class LogDensity {
 public:
  LogDensity(LikelihoodData data, const ModelSpec& spec, ParamLayout layout);

  int n_params() const { return layout_.n_params; }
  const ParamLayout& layout() const { return layout_; }
  const LikelihoodData& data() const { return data_; }

  void prepare(GradWorkspace& ws) const;

  /// Log posterior and gradient; returns -inf (gradient zeroed) for
  /// non-finite input or data impossible under degenerate fixed rates.
  double value_grad(std::span<const double> u, std::span<double> grad, GradWorkspace& ws) const;

  double value(std::span<const double> u, GradWorkspace& ws) const;

  /// Likelihood term alone, on the constrained scale.
  double log_likelihood(std::span<const double> theta) const;

  /// Unconstrained -> constrained (identity layout positions).
  void constrain(std::span<const double> u, std::span<double> theta) const;

  // Calibration evidence as beta(a, b) exponents actually applied.
  double gamma_prior_a() const { return gamma_a_; }
  double gamma_prior_b() const { return gamma_b_; }

  static constexpr double kProbFloor = 1e-12;

 private:
  double rows_ll_grad(std::span<const double> u, std::span<double> grad, GradWorkspace& ws,
                      bool with_grad) const;

  LikelihoodData data_;
  ParamLayout layout_;
  MeasurementKind kind_;
  double fixed_delta_ = 1.0;
  double fixed_gamma_ = 1.0;
  double gamma_a_ = 0.0, gamma_b_ = 0.0;  // beta exponents for gamma when estimated
  double delta_a_ = 0.0, delta_b_ = 0.0;
  size_t n_blocks_ = 0;
};

/// Convenience: assemble data + layout + density for a sample/spec pair.
LogDensity make_log_density(const Sample& sample, const ModelSpec& spec,
                            const CovariateSchema& schema);

// t_3(0, 2.5) log density (unnormalized) and derivative; the project-wide
// weakly informative prior.
double student_t_logpdf(double x);
double student_t_dlogpdf(double x);

}  // namespace prevmrp
