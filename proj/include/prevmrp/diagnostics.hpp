#pragma once

#include <string>
#include <vector>

#include "prevmrp/draws.hpp"

namespace prevmrp {

/// Per-parameter convergence summaries. R-hat is split-chain; ESS is the
/// bulk variant (rank-normalized draws, paired-autocorrelation truncation).
/// Constant chains yield NaN for both, by design.
struct Diagnostics {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess_bulk;
  uint64_t divergences = 0;

  double max_rhat() const;  // NaN entries ignored; NaN if all are
  double min_ess() const;
};

/// Requires at least 2 chains and 100 draws per chain (throws DataError).
Diagnostics diagnose(const PosteriorDraws& draws);

// Building blocks, exposed for tests: chains laid out chain-major with equal
// length. Split each chain in half before calling.
double split_rhat(const std::vector<std::vector<double>>& chains);
double ess_bulk(const std::vector<std::vector<double>>& chains);

}  // namespace prevmrp
