#pragma once

#include <vector>

#include "prevmrp/likelihood.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/schema.hpp"

namespace prevmrp {

enum class MleStatus : uint8_t { Converged, NonConverged, Separated };

struct MleFit {
  MleStatus status = MleStatus::NonConverged;
  std::vector<double> beta;  // intercept first, then slope coefficients
  int iterations = 0;
  double max_abs_score = 0.0;

  double intercept() const { return beta.empty() ? 0.0 : beta.front(); }
  /// Fitted prevalence for an all-zero covariate row; +-inf intercepts map to
  /// the boundary rather than a silent interior value.
  double prevalence_at_intercept() const;
};

/// Newton/IRLS maximum likelihood for a logistic regression with an intercept
/// and the spec's overall-slope terms only (no measurement layer, no varying
/// effects). Converges when max |score| < 1e-8, gives up after 100 rounds.
/// Degenerate outcomes (all successes or all failures on the boundary of the
/// design) are reported as Separated with an infinite intercept instead of a
/// quietly wrong number.
MleFit fit_mle_logistic(const Sample& sample, const ModelSpec& spec,
                        const CovariateSchema& schema);

}  // namespace prevmrp
