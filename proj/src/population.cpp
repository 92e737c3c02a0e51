#include "prevmrp/population.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "prevmrp/common.hpp"
#include "prevmrp/rng.hpp"

namespace prevmrp {

void UnitRows::resize(int k, size_t n) {
  n_covariates = k;
  n_units = n;
  x.assign(static_cast<size_t>(k), std::vector<double>(n));
  level.assign(static_cast<size_t>(k), std::vector<uint16_t>(n));
  bin.assign(static_cast<size_t>(k), std::vector<uint8_t>(n));
}

void PopulationConfig::validate() const {
  if (n_units == 0) throw ConfigError("population size must be positive");
  if (n_covariates < 1) throw ConfigError("need at least one covariate");
  if (levels < 2) throw ConfigError("levels per covariate must be at least 2");
  if (!(prevalence > 0.0 && prevalence < 1.0)) {
    throw ConfigError("target prevalence must lie in (0, 1)");
  }
  if (!(lower < upper)) throw ConfigError("uniform bounds need lower < upper");
  if (n_units < static_cast<uint64_t>(levels)) {
    throw ConfigError("population smaller than the level count");
  }
}

CovariateSchema PopulationConfig::schema() const {
  return CovariateSchema::uniform(n_covariates, levels);
}

double Population::mean_pi() const {
  return std::accumulate(pi.begin(), pi.end(), 0.0) / static_cast<double>(pi.size());
}

double Population::mean_y() const {
  uint64_t s = 0;
  for (uint8_t v : y) s += v;
  return static_cast<double>(s) / static_cast<double>(y.size());
}

double Sample::mean_y_star() const {
  uint64_t s = 0;
  for (uint8_t v : y_star) s += v;
  return static_cast<double>(s) / static_cast<double>(y_star.size());
}

double solve_intercept(double prevalence, double zeta1, int n_covariates, double lower,
                       double upper) {
  if (!(prevalence > 0.0 && prevalence < 1.0)) {
    throw ConfigError("prevalence must lie in (0, 1)");
  }
  return logit(prevalence) - zeta1 * static_cast<double>(n_covariates) * (lower + upper) / 2.0;
}

std::vector<uint16_t> discretize(std::span<const double> x, int levels) {
  if (levels < 2) throw ConfigError("discretize needs at least 2 levels");
  const size_t n = x.size();
  if (n < static_cast<size_t>(levels)) throw ConfigError("fewer values than levels");

  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](uint32_t a, uint32_t b) { return x[a] < x[b]; });

  std::vector<uint16_t> out(n);
  const auto ln = static_cast<uint64_t>(levels);
  for (size_t rank = 0; rank < n; ++rank) {
    out[order[rank]] = static_cast<uint16_t>(rank * ln / n);
  }
  return out;
}

Population generate_population(const PopulationConfig& config) {
  config.validate();
  const int k = config.n_covariates;
  const size_t n = config.n_units;

  Population pop;
  pop.config = config;
  pop.zeta0 = solve_intercept(config.prevalence, config.zeta1, k, config.lower, config.upper);
  pop.rows.resize(k, n);
  pop.pi.resize(n);
  pop.y.resize(n);

  const bool flat = config.zeta1 == 0.0;

  // One counter-based stream per unit: the parallel loop is bit-identical to
  // the serial one for any thread count.
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < static_cast<int64_t>(n); ++i) {
    uint64_t unit_state = config.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<uint64_t>(i) + 1));
    Rng rng(splitmix64(unit_state));
    double eta = pop.zeta0;
    for (int c = 0; c < k; ++c) {
      const double v = rng.uniform(config.lower, config.upper);
      pop.rows.x[static_cast<size_t>(c)][static_cast<size_t>(i)] = v;
      eta += config.zeta1 * v;
    }
    const double p = flat ? config.prevalence : logistic(eta);
    pop.pi[static_cast<size_t>(i)] = p;
    pop.y[static_cast<size_t>(i)] = rng.bernoulli(p) ? 1 : 0;
  }

  for (int c = 0; c < k; ++c) {
    pop.rows.level[static_cast<size_t>(c)] = discretize(pop.rows.x[static_cast<size_t>(c)], config.levels);
    const auto two = discretize(pop.rows.x[static_cast<size_t>(c)], 2);
    auto& b = pop.rows.bin[static_cast<size_t>(c)];
    b.resize(n);
    for (size_t i = 0; i < n; ++i) b[i] = static_cast<uint8_t>(two[i]);
  }
  return pop;
}

std::vector<uint8_t> corrupt_measurements(std::span<const uint8_t> y, double delta, double gamma,
                                          uint64_t seed) {
  if (delta < 0.0 || delta > 1.0 || gamma < 0.0 || gamma > 1.0) {
    throw ConfigError("sensitivity and specificity must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<uint8_t> out(y.size());
  for (size_t i = 0; i < y.size(); ++i) {
    const double p = y[i] ? delta : 1.0 - gamma;
    out[i] = rng.bernoulli(p) ? 1 : 0;
  }
  return out;
}

Sample draw_sample(const Population& pop, size_t n, uint64_t seed) {
  const size_t total = pop.rows.n_units;
  if (n == 0 || n > total) throw ConfigError("sample size must lie in [1, N]");

  std::vector<uint64_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0ull);
  Rng rng(seed);
  for (size_t i = 0; i < n; ++i) {
    const size_t j = i + static_cast<size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());

  Sample s;
  const int k = pop.rows.n_covariates;
  s.rows.resize(k, n);
  s.y.resize(n);
  s.source_index = idx;
  for (size_t i = 0; i < n; ++i) {
    const size_t src = idx[i];
    for (int c = 0; c < k; ++c) {
      s.rows.x[static_cast<size_t>(c)][i] = pop.rows.x[static_cast<size_t>(c)][src];
      s.rows.level[static_cast<size_t>(c)][i] = pop.rows.level[static_cast<size_t>(c)][src];
      s.rows.bin[static_cast<size_t>(c)][i] = pop.rows.bin[static_cast<size_t>(c)][src];
    }
    s.y[i] = pop.y[src];
  }
  return s;
}

ObservableBounds observable_bounds(double delta, double gamma) {
  if (delta < 0.0 || delta > 1.0 || gamma < 0.0 || gamma > 1.0) {
    throw ConfigError("sensitivity and specificity must lie in [0, 1]");
  }
  ObservableBounds b;
  const double one_minus_gamma = 1.0 - gamma;
  if (delta == one_minus_gamma) {
    b.defined = false;
    return b;
  }
  b.defined = true;
  if (delta > one_minus_gamma) {
    b.lo = one_minus_gamma;
    b.hi = delta;
  } else {
    b.lo = delta;
    b.hi = one_minus_gamma;
  }
  return b;
}

namespace {

int64_t expected_count_or_throw(double rate, int64_t m, const char* what) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError(std::string(what) + " rate must lie in [0, 1]");
  if (m <= 0) throw ConfigError(std::string(what) + " calibration size must be positive");
  const double expected = static_cast<double>(m) * rate;
  const double rounded = std::round(expected);
  if (std::abs(expected - rounded) > 1e-9) {
    throw ConfigError(std::string(what) + " calibration off the published grid: " +
                      format_double(expected) + " expected events is not an integer");
  }
  return static_cast<int64_t>(rounded);
}

}  // namespace

SpecificityCounts calibration_counts(double gamma_true, int64_t m_gamma) {
  const int64_t fp = expected_count_or_throw(1.0 - gamma_true, m_gamma, "specificity");
  return {fp, m_gamma - fp};
}

SensitivityCounts sensitivity_calibration_counts(double delta_true, int64_t m_delta) {
  const int64_t fn = expected_count_or_throw(1.0 - delta_true, m_delta, "sensitivity");
  return {m_delta - fn, fn};
}

void write_population_csv(const std::string& path, const Population& pop) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  const int k = pop.rows.n_covariates;
  for (int c = 1; c <= k; ++c) std::fprintf(f, "x%d,", c);
  for (int c = 1; c <= k; ++c) std::fprintf(f, "level_x%d,", c);
  std::fprintf(f, "y\n");
  for (size_t i = 0; i < pop.rows.n_units; ++i) {
    for (int c = 0; c < k; ++c) {
      std::fprintf(f, "%s,", format_double(pop.rows.x[static_cast<size_t>(c)][i]).c_str());
    }
    for (int c = 0; c < k; ++c) {
      std::fprintf(f, "%u,", pop.rows.level[static_cast<size_t>(c)][i]);
    }
    std::fprintf(f, "%u\n", pop.y[i]);
  }
  if (std::fclose(f) != 0) throw IoError("error closing '" + path + "'");
}

}  // namespace prevmrp
