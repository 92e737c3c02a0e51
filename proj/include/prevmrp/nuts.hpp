#pragma once

#include <cstdint>

#include "prevmrp/draws.hpp"
#include "prevmrp/likelihood.hpp"

namespace prevmrp {

struct McmcConfig {
  int chains = 4;
  int warmup = 1000;
  int samples = 1000;
  double target_accept = 0.8;
  int max_depth = 10;
  double init_range = 2.0;  // unconstrained init ~ uniform(-r, r)
  uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

/// Dynamic-path-length Hamiltonian sampler (no-U-turn criterion, slice
/// acceptance) with dual-averaging step-size adaptation and windowed
/// diagonal-metric estimation during warmup. Deterministic given (seed,
/// chains): every chain draws from its own named stream, so scheduling
/// cannot reorder anything.
///
/// Draws are returned on the constrained scale. Warning flags follow the
/// project gates: > 1% post-warmup divergences, any split R-hat > 1.01.
PosteriorDraws sample_posterior(const LogDensity& density, const McmcConfig& cfg);

}  // namespace prevmrp
