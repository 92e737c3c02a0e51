#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace prevmrp {

struct ChainStats {
  uint64_t divergences = 0;      // post-warmup divergent transitions
  uint64_t max_depth_hits = 0;   // trajectories stopped by the depth cap
  double step_size = 0.0;
  double accept_mean = 0.0;
};

/// Posterior draws on the constrained scale, per chain, plus sampler
/// metadata. Draw (c, i) of parameter p sits at [(c * n_samples + i) *
/// n_params + p].
struct PosteriorDraws {
  std::vector<std::string> names;
  size_t n_params = 0;
  size_t n_chains = 0;
  size_t n_samples = 0;  // post-warmup draws per chain
  std::vector<double> values;
  std::vector<double> lp;
  std::vector<ChainStats> chain_stats;

  bool divergence_warning = false;  // > 1% divergent post-warmup
  bool rhat_warning = false;        // any split R-hat > 1.01

  size_t total_draws() const { return n_chains * n_samples; }
  double value(size_t chain, size_t draw, size_t param) const {
    return values[(chain * n_samples + draw) * n_params + param];
  }
  std::span<const double> draw(size_t chain, size_t i) const {
    return {values.data() + (chain * n_samples + i) * n_params, n_params};
  }

  int param_index(const std::string& name) const;  // -1 if absent

  /// All chains' values of one parameter, chain-major.
  std::vector<double> column(size_t param) const;

  uint64_t total_divergences() const;

  /// One row per draw (chain, iteration, parameters, log posterior) with a
  /// JSON sidecar `<path>.meta.json` for sampler metadata. Optional extra
  /// columns append per-draw estimands.
  void write_csv(const std::string& path, const std::vector<std::string>& extra_names = {},
                 const std::vector<std::vector<double>>& extra_cols = {}) const;
};

/// Median / quantiles over all chains of one parameter (type-7 interpolation).
double draws_median(const PosteriorDraws& draws, size_t param);
double draws_quantile(const PosteriorDraws& draws, size_t param, double p);

double quantile_type7(std::vector<double> values, double p);  // sorts a copy
double median_of(std::vector<double> values);

}  // namespace prevmrp
