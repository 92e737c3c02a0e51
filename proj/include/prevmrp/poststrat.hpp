#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prevmrp/cells.hpp"
#include "prevmrp/draws.hpp"
#include "prevmrp/likelihood.hpp"

namespace prevmrp {

/// Beta exponents (a, b) actually applied for an estimated rate: beta(TN, FP)
/// verbatim, except that a zero failure count switches to the binomial
/// evidence under a uniform base prior, beta(successes + 1, 1), which is the
/// proper counterpart.
struct BetaExponents {
  double a = 0.0;
  double b = 0.0;
};
BetaExponents gamma_prior_exponents(const Measurement& m);
BetaExponents delta_prior_exponents(const Measurement& m);

/// Cell table bound to a parameter layout: per-cell absolute parameter
/// indices so per-draw evaluation is a flat gather-and-accumulate.
struct BoundCells {
  size_t n_cells = 0;
  int n_varying = 0;
  int n_slopes = 0;
  std::vector<uint32_t> alpha_index;  // n_cells x n_varying
  std::vector<double> slope_values;   // n_cells x n_slopes
  std::vector<uint32_t> slope_index;  // n_slopes
  std::vector<double> weight;
  double total_weight = 0.0;
};

/// Throws DataError when a cell references a level outside the layout.
BoundCells bind_cells(const CellTable& table, const ParamLayout& layout);

/// Per-cell prevalence for one constrained draw.
std::vector<double> cell_prevalence(std::span<const double> theta, const BoundCells& cells);

/// Weighted mean of per-cell values by cell counts.
double weighted_cell_mean(std::span<const double> cell_values, const BoundCells& cells);

/// Prevalence aggregate for one draw without materializing per-cell values.
double prevalence_estimate(std::span<const double> theta, const BoundCells& cells);

/// Per-draw estimands: population prevalence, sample posterior-predictive
/// mean, and the population test-positive rate under that draw's delta and
/// gamma.
struct EstimandDraws {
  std::vector<double> pi_pop;
  std::vector<double> pi_sample;
  std::vector<double> pr_ystar;

  size_t size() const { return pi_pop.size(); }
};

EstimandDraws estimand_draws(const PosteriorDraws& draws, const BoundCells& population_cells,
                             const BoundCells& sample_cells, const ParamLayout& layout,
                             const Measurement& measurement);

/// Draws of (pi, Pr(y* = 1)) implied by the priors alone, mapped through the
/// poststratification table.
struct PriorPredictive {
  std::vector<double> pi;
  std::vector<double> pr_ystar;
};

PriorPredictive prior_predictive(const ModelSpec& spec, const CovariateSchema& schema,
                                 const CellTable& cells, size_t n_draws, uint64_t seed);

}  // namespace prevmrp
