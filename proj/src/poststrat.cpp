#include "prevmrp/poststrat.hpp"

#include <cmath>

#include "prevmrp/common.hpp"
#include "prevmrp/rng.hpp"

namespace prevmrp {

BetaExponents gamma_prior_exponents(const Measurement& m) {
  if (!m.estimates_gamma()) throw ConfigError("specificity is not estimated in this spec");
  const auto& c = m.calibration;
  if (c.fp > 0) return {static_cast<double>(c.tn), static_cast<double>(c.fp)};
  return {static_cast<double>(c.tn) + 1.0, 1.0};
}

BetaExponents delta_prior_exponents(const Measurement& m) {
  if (!m.estimates_delta()) throw ConfigError("sensitivity is not estimated in this spec");
  const auto& c = m.calibration;
  if (c.fn > 0) return {static_cast<double>(c.tp), static_cast<double>(c.fn)};
  return {static_cast<double>(c.tp) + 1.0, 1.0};
}

BoundCells bind_cells(const CellTable& table, const ParamLayout& layout) {
  if (table.varying_covariates.size() != layout.varying.size() ||
      table.slope_terms.size() != layout.slopes.size()) {
    throw DataError("cell table does not match the model layout");
  }
  BoundCells b;
  b.n_cells = table.n_cells;
  b.n_varying = static_cast<int>(layout.varying.size());
  b.n_slopes = static_cast<int>(layout.slopes.size());
  for (size_t v = 0; v < layout.varying.size(); ++v) {
    if (table.varying_covariates[v] != layout.varying[v].covariate) {
      throw DataError("cell table covariate order does not match the model layout");
    }
  }
  for (size_t s = 0; s < layout.slopes.size(); ++s) {
    if (table.slope_terms[s].covariate != layout.slopes[s].covariate) {
      throw DataError("cell table slope order does not match the model layout");
    }
    b.slope_index.push_back(static_cast<uint32_t>(layout.slopes[s].index));
  }

  const size_t kv = layout.varying.size();
  const size_t ks = layout.slopes.size();
  b.alpha_index.resize(table.n_cells * kv);
  b.slope_values = table.slope_means;
  b.weight.resize(table.n_cells);
  for (size_t j = 0; j < table.n_cells; ++j) {
    for (size_t v = 0; v < kv; ++v) {
      const uint16_t level = table.levels[j * kv + v];
      if (level >= layout.varying[v].levels) {
        throw DataError("cell references level " + std::to_string(level) +
                        " outside the model's level range");
      }
      b.alpha_index[j * kv + v] =
          static_cast<uint32_t>(layout.varying[v].z_offset) + level;
    }
    b.weight[j] = static_cast<double>(table.counts[j]);
    b.total_weight += b.weight[j];
    (void)ks;
  }
  if (b.total_weight <= 0.0) throw DataError("cell table has zero total count");
  return b;
}

namespace {

inline double cell_eta(std::span<const double> theta, const BoundCells& cells, size_t j) {
  double eta = theta[0];
  const size_t kv = static_cast<size_t>(cells.n_varying);
  const size_t ks = static_cast<size_t>(cells.n_slopes);
  for (size_t s = 0; s < ks; ++s) {
    eta += theta[cells.slope_index[s]] * cells.slope_values[j * ks + s];
  }
  for (size_t v = 0; v < kv; ++v) {
    eta += theta[cells.alpha_index[j * kv + v]];
  }
  return eta;
}

}  // namespace

std::vector<double> cell_prevalence(std::span<const double> theta, const BoundCells& cells) {
  std::vector<double> out(cells.n_cells);
  for (size_t j = 0; j < cells.n_cells; ++j) out[j] = logistic(cell_eta(theta, cells, j));
  return out;
}

double weighted_cell_mean(std::span<const double> cell_values, const BoundCells& cells) {
  if (cell_values.size() != cells.n_cells) throw DataError("cell value/count size mismatch");
  double acc = 0.0;
  for (size_t j = 0; j < cells.n_cells; ++j) acc += cells.weight[j] * cell_values[j];
  return acc / cells.total_weight;
}

double prevalence_estimate(std::span<const double> theta, const BoundCells& cells) {
  double acc = 0.0;
  for (size_t j = 0; j < cells.n_cells; ++j) {
    acc += cells.weight[j] * logistic(cell_eta(theta, cells, j));
  }
  return acc / cells.total_weight;
}

EstimandDraws estimand_draws(const PosteriorDraws& draws, const BoundCells& population_cells,
                             const BoundCells& sample_cells, const ParamLayout& layout,
                             const Measurement& measurement) {
  const size_t total = draws.total_draws();
  EstimandDraws out;
  out.pi_pop.resize(total);
  out.pi_sample.resize(total);
  out.pr_ystar.resize(total);

  const int gi = layout.gamma_index;
  const int di = layout.delta_index;
  const double fixed_gamma = measurement.kind == MeasurementKind::None ? 1.0 : measurement.gamma;
  const double fixed_delta = measurement.kind == MeasurementKind::None ? 1.0 : measurement.delta;

  // Per-draw slots; order of writes never matters.
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < static_cast<int64_t>(total); ++b) {
    const size_t chain = static_cast<size_t>(b) / draws.n_samples;
    const size_t it = static_cast<size_t>(b) % draws.n_samples;
    const auto theta = draws.draw(chain, it);
    const double pi_pop = prevalence_estimate(theta, population_cells);
    const double pi_s = prevalence_estimate(theta, sample_cells);
    const double gamma = gi >= 0 ? theta[static_cast<size_t>(gi)] : fixed_gamma;
    const double delta = di >= 0 ? theta[static_cast<size_t>(di)] : fixed_delta;
    out.pi_pop[static_cast<size_t>(b)] = pi_pop;
    out.pi_sample[static_cast<size_t>(b)] = pi_s;
    out.pr_ystar[static_cast<size_t>(b)] = (1.0 - gamma) * (1.0 - pi_pop) + delta * pi_pop;
  }
  return out;
}

PriorPredictive prior_predictive(const ModelSpec& spec, const CovariateSchema& schema,
                                 const CellTable& cells, size_t n_draws, uint64_t seed) {
  const ParamLayout layout = ParamLayout::build(spec, schema);
  const BoundCells bound = bind_cells(cells, layout);
  const bool est_gamma = spec.measurement.estimates_gamma();
  const bool est_delta = spec.measurement.estimates_delta();
  const BetaExponents ge = est_gamma ? gamma_prior_exponents(spec.measurement) : BetaExponents{};
  const BetaExponents de = est_delta ? delta_prior_exponents(spec.measurement) : BetaExponents{};
  const double fixed_gamma = spec.measurement.kind == MeasurementKind::None ? 1.0 : spec.measurement.gamma;
  const double fixed_delta = spec.measurement.kind == MeasurementKind::None ? 1.0 : spec.measurement.delta;

  PriorPredictive out;
  out.pi.resize(n_draws);
  out.pr_ystar.resize(n_draws);

  // One stream per draw keeps the loop order-free.
#pragma omp parallel for schedule(static)
  for (int64_t b = 0; b < static_cast<int64_t>(n_draws); ++b) {
    uint64_t state = seed ^ (0xd1342543de82ef95ULL * (static_cast<uint64_t>(b) + 1));
    Rng rng(splitmix64(state));
    std::vector<double> theta(static_cast<size_t>(layout.n_params), 0.0);
    theta[0] = 2.5 * rng.student_t(3.0);
    for (const auto& s : layout.slopes) {
      theta[static_cast<size_t>(s.index)] = 2.5 * rng.student_t(3.0);
    }
    for (const auto& v : layout.varying) {
      const double sigma = std::abs(2.5 * rng.student_t(3.0));
      theta[static_cast<size_t>(v.sigma_index)] = sigma;
      for (int l = 0; l < v.levels; ++l) {
        theta[static_cast<size_t>(v.z_offset + l)] = sigma * rng.normal();
      }
    }
    double gamma = fixed_gamma;
    double delta = fixed_delta;
    if (est_delta) {
      delta = rng.beta(de.a, de.b);
      theta[static_cast<size_t>(layout.delta_index)] = delta;
    }
    if (est_gamma) {
      gamma = rng.beta(ge.a, ge.b);
      theta[static_cast<size_t>(layout.gamma_index)] = gamma;
    }
    const double pi = prevalence_estimate(theta, bound);
    out.pi[static_cast<size_t>(b)] = pi;
    out.pr_ystar[static_cast<size_t>(b)] = (1.0 - gamma) * (1.0 - pi) + delta * pi;
  }
  return out;
}

}  // namespace prevmrp
