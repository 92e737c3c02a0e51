#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prevmrp/common.hpp"
#include "prevmrp/nuts.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/poststrat.hpp"
#include "prevmrp/rng.hpp"

using namespace prevmrp;

namespace {

/// Hand-built two-cell table over one varying covariate.
CellTable two_cells(uint64_t n0, uint64_t n1) {
  CellTable t;
  t.varying_covariates = {0};
  t.n_cells = 2;
  t.levels = {0, 1};
  t.counts = {n0, n1};
  return t;
}

ModelSpec one_varying() {
  ModelSpec spec;
  spec.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous}};
  return spec;
}

}  // namespace

TEST_CASE("cell prevalence basics") {
  const auto schema = CovariateSchema::uniform(1, 2);
  const auto spec = one_varying();
  const auto layout = ParamLayout::build(spec, schema);
  const auto cells = bind_cells(two_cells(1, 1), layout);

  SUBCASE("zero intercept, zero effects is one half everywhere") {
    std::vector<double> theta(static_cast<size_t>(layout.n_params), 0.0);
    const auto pi = cell_prevalence(theta, cells);
    CHECK(pi[0] == doctest::Approx(0.5));
    CHECK(pi[1] == doctest::Approx(0.5));
  }
  SUBCASE("intercept alone moves every cell") {
    std::vector<double> theta(static_cast<size_t>(layout.n_params), 0.0);
    theta[0] = logit(0.01);
    const auto pi = cell_prevalence(theta, cells);
    CHECK(pi[0] == doctest::Approx(0.01).epsilon(1e-12));
  }
  SUBCASE("opposite varying effects split the cells") {
    std::vector<double> theta(static_cast<size_t>(layout.n_params), 0.0);
    theta[static_cast<size_t>(layout.varying[0].z_offset)] = 1.0;
    theta[static_cast<size_t>(layout.varying[0].z_offset) + 1] = -1.0;
    const auto pi = cell_prevalence(theta, cells);
    CHECK(pi[0] == doctest::Approx(0.731).epsilon(1e-3));
    CHECK(pi[1] == doctest::Approx(0.269).epsilon(1e-3));
  }
}

TEST_CASE("population estimate is the count-weighted mean") {
  const auto schema = CovariateSchema::uniform(1, 2);
  const auto layout = ParamLayout::build(one_varying(), schema);
  const auto cells = bind_cells(two_cells(100, 300), layout);
  CHECK(weighted_cell_mean(std::vector<double>{0.1, 0.2}, cells) == doctest::Approx(0.175));
  CHECK(weighted_cell_mean(std::vector<double>{0.3, 0.3}, cells) == doctest::Approx(0.3));

  const auto sample_cells = bind_cells(two_cells(10, 30), layout);
  CHECK(weighted_cell_mean(std::vector<double>{0.1, 0.2}, sample_cells) == doctest::Approx(0.175));
}

TEST_CASE("population estimate equals brute-force per-unit prediction") {
  PopulationConfig pc;
  pc.n_units = 1000;
  pc.levels = 4;
  pc.zeta1 = 0.3;
  pc.prevalence = 0.1;
  pc.seed = 23;
  const auto pop = generate_population(pc);
  const auto schema = pc.schema();
  const auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
  const auto& spec = ladder[3];
  const auto layout = ParamLayout::build(spec, schema);
  const auto cells = bind_cells(cell_table(pop.rows, spec, schema, CountKind::PopulationN), layout);

  Rng rng(2);
  std::vector<double> theta(static_cast<size_t>(layout.n_params));
  for (auto& v : theta) v = 0.3 * rng.normal();
  const double estimate = prevalence_estimate(theta, cells);

  double brute = 0.0;
  for (size_t i = 0; i < pop.rows.n_units; ++i) {
    double eta = theta[0];
    for (const auto& v : layout.varying) {
      eta += theta[static_cast<size_t>(v.z_offset) +
                   pop.rows.level[static_cast<size_t>(v.covariate)][i]];
    }
    brute += logistic(eta);
  }
  brute /= static_cast<double>(pop.rows.n_units);
  CHECK(estimate == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("weighted estimators are invariant to cell order and splits") {
  const auto schema = CovariateSchema::uniform(1, 4);
  ModelSpec spec = one_varying();
  const auto layout = ParamLayout::build(spec, schema);

  CellTable t;
  t.varying_covariates = {0};
  t.n_cells = 3;
  t.levels = {0, 1, 2};
  t.counts = {10, 20, 30};
  const auto cells = bind_cells(t, layout);

  CellTable shuffled;
  shuffled.varying_covariates = {0};
  shuffled.n_cells = 3;
  shuffled.levels = {2, 0, 1};
  shuffled.counts = {30, 10, 20};
  const auto cells2 = bind_cells(shuffled, layout);

  CellTable split;  // cell 2 split into two identical halves
  split.varying_covariates = {0};
  split.n_cells = 4;
  split.levels = {0, 1, 2, 2};
  split.counts = {10, 20, 15, 15};
  const auto cells3 = bind_cells(split, layout);

  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> theta(static_cast<size_t>(layout.n_params));
    for (auto& v : theta) v = rng.normal();
    const double a = prevalence_estimate(theta, cells);
    const double b = prevalence_estimate(theta, cells2);
    const double c = prevalence_estimate(theta, cells3);
    CHECK(a == doctest::Approx(b).epsilon(1e-14));
    CHECK(a == doctest::Approx(c).epsilon(1e-14));

    // estimate bounded by the per-cell extremes
    const auto pi = cell_prevalence(theta, cells);
    CHECK(a >= *std::min_element(pi.begin(), pi.end()) - 1e-14);
    CHECK(a <= *std::max_element(pi.begin(), pi.end()) + 1e-14);
  }
}

TEST_CASE("cells referencing unknown levels are rejected") {
  const auto schema = CovariateSchema::uniform(1, 2);
  const auto layout = ParamLayout::build(one_varying(), schema);
  CellTable t;
  t.varying_covariates = {0};
  t.n_cells = 1;
  t.levels = {7};
  t.counts = {5};
  CHECK_THROWS_AS(bind_cells(t, layout), DataError);
}

TEST_CASE("estimand draws bundle the three series consistently") {
  const auto schema = CovariateSchema::uniform(1, 2);
  ModelSpec spec = one_varying();
  spec.measurement = Measurement::estimated_specificity(CalibrationData{0, 0, 398, 2}, 1.0);
  const auto layout = ParamLayout::build(spec, schema);
  const auto pop_cells = bind_cells(two_cells(100, 300), layout);
  const auto smp_cells = bind_cells(two_cells(10, 10), layout);

  PosteriorDraws draws;
  draws.names = layout.names;
  draws.n_params = static_cast<size_t>(layout.n_params);
  draws.n_chains = 1;
  draws.n_samples = 1;
  draws.values.assign(draws.n_params, 0.0);
  draws.values[0] = logit(0.2);
  draws.values[static_cast<size_t>(layout.gamma_index)] = 0.99;
  draws.lp = {0.0};
  draws.chain_stats.assign(1, {});

  const auto est = estimand_draws(draws, pop_cells, smp_cells, layout, spec.measurement);
  REQUIRE(est.size() == 1);
  CHECK(est.pi_pop[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(est.pi_sample[0] == doctest::Approx(0.2).epsilon(1e-12));
  // p* = (1 - 0.99) * 0.8 + 1 * 0.2
  CHECK(est.pr_ystar[0] == doctest::Approx(0.208).epsilon(1e-12));

  SUBCASE("toy two-cell case matches hand arithmetic") {
    PosteriorDraws d2 = draws;
    d2.values[static_cast<size_t>(layout.varying[0].z_offset)] = 0.5;
    d2.values[static_cast<size_t>(layout.varying[0].z_offset) + 1] = -0.5;
    const auto e2 = estimand_draws(d2, pop_cells, smp_cells, layout, spec.measurement);
    const double p0 = logistic(logit(0.2) + 0.5);
    const double p1 = logistic(logit(0.2) - 0.5);
    CHECK(e2.pi_pop[0] == doctest::Approx((100.0 * p0 + 300.0 * p1) / 400.0).epsilon(1e-12));
    CHECK(e2.pi_sample[0] == doctest::Approx((p0 + p1) / 2.0).epsilon(1e-12));
    CHECK(e2.pr_ystar[0] ==
          doctest::Approx(0.01 * (1.0 - e2.pi_pop[0]) + e2.pi_pop[0]).epsilon(1e-12));
  }
}

TEST_CASE("perfect-test draws make the test-prevalence series equal the prevalence series") {
  const auto schema = CovariateSchema::uniform(1, 2);
  ModelSpec spec = one_varying();
  spec.measurement = Measurement::known(1.0, 1.0);
  const auto layout = ParamLayout::build(spec, schema);
  const auto cells = bind_cells(two_cells(50, 50), layout);

  PosteriorDraws draws;
  draws.names = layout.names;
  draws.n_params = static_cast<size_t>(layout.n_params);
  draws.n_chains = 1;
  draws.n_samples = 20;
  draws.values.resize(draws.n_samples * draws.n_params);
  Rng rng(17);
  for (auto& v : draws.values) v = rng.normal();
  draws.lp.assign(20, 0.0);
  draws.chain_stats.assign(1, {});

  const auto est = estimand_draws(draws, cells, cells, layout, spec.measurement);
  CHECK(est.pr_ystar == est.pi_pop);
}

TEST_CASE("a perfect known test reproduces the measurement-free fit exactly") {
  // Same data, same seed: the measurement layer at delta = gamma = 1 is the
  // identity, so the whole fit and every estimand agree draw for draw.
  PopulationConfig pc;
  pc.n_units = 20000;
  pc.levels = 4;
  pc.zeta1 = 0.3;
  pc.prevalence = 0.1;
  pc.seed = 71;
  const auto pop = generate_population(pc);
  const auto schema = pc.schema();
  auto sample = draw_sample(pop, 300, 72);
  sample.y_star = sample.y;

  const auto ladder_none = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
  const auto ladder_perf =
      build_model_ladder(schema, LadderVariant::Basic, Measurement::known(1.0, 1.0));
  const auto& spec_a = ladder_none[2];
  const auto& spec_b = ladder_perf[2];
  const auto layout = ParamLayout::build(spec_a, schema);

  McmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 200;
  cfg.samples = 200;
  cfg.seed = 99;
  LogDensity da(LikelihoodData::build(sample, spec_a, schema), spec_a, layout);
  LogDensity db(LikelihoodData::build(sample, spec_b, schema), spec_b, layout);
  const auto draws_a = sample_posterior(da, cfg);
  const auto draws_b = sample_posterior(db, cfg);
  CHECK(draws_a.values == draws_b.values);

  const auto pop_cells =
      bind_cells(cell_table(pop.rows, spec_a, schema, CountKind::PopulationN), layout);
  const auto smp_cells =
      bind_cells(cell_table(sample.rows, spec_a, schema, CountKind::SampleN), layout);
  const auto est_a = estimand_draws(draws_a, pop_cells, smp_cells, layout, spec_a.measurement);
  const auto est_b = estimand_draws(draws_b, pop_cells, smp_cells, layout, spec_b.measurement);
  CHECK(est_a.pi_sample == est_b.pi_sample);
  CHECK(est_a.pi_pop == est_b.pi_pop);
  CHECK(est_b.pr_ystar == est_b.pi_pop);
}

TEST_CASE("prior predictive distributions") {
  PopulationConfig pc;
  pc.n_units = 20000;
  pc.levels = 10;
  pc.zeta1 = 0.3;
  pc.prevalence = 0.01;
  pc.seed = 101;
  const auto pop = generate_population(pc);
  const auto schema = pc.schema();

  SUBCASE("perfect fixed test makes the two series identical") {
    auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::known(1.0, 1.0));
    const auto& spec = ladder[1];
    const auto table = cell_table(pop.rows, spec, schema, CountKind::PopulationN);
    const auto pp = prior_predictive(spec, schema, table, 2000, 5);
    CHECK(pp.pi == pp.pr_ystar);
  }

  SUBCASE("intercept-only prior is symmetric about one half") {
    auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
    const auto& spec = ladder[0];
    const auto table = cell_table(pop.rows, spec, schema, CountKind::PopulationN);
    const auto pp = prior_predictive(spec, schema, table, 10000, 6);
    CHECK(std::abs(median_of(pp.pi) - 0.5) < 0.03);

    // two-sided KS of the draws against their own reflection, alpha = 0.01
    std::vector<double> sorted = pp.pi;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> reflected(sorted.size());
    for (size_t i = 0; i < sorted.size(); ++i) {
      reflected[i] = 1.0 - sorted[sorted.size() - 1 - i];
    }
    double d = 0.0;
    size_t j = 0;
    for (size_t i = 0; i < sorted.size(); ++i) {
      while (j < reflected.size() && reflected[j] <= sorted[i]) ++j;
      const double f = static_cast<double>(i + 1) / static_cast<double>(sorted.size());
      const double g = static_cast<double>(j) / static_cast<double>(reflected.size());
      d = std::max(d, std::abs(f - g));
    }
    const double critical = 1.628 * std::sqrt(2.0 / static_cast<double>(sorted.size()));
    CHECK(d < critical);
  }

  SUBCASE("the full model moves prior mass away from the extreme low end") {
    auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
    const auto table0 = cell_table(pop.rows, ladder[0], schema, CountKind::PopulationN);
    const auto table5 = cell_table(pop.rows, ladder[5], schema, CountKind::PopulationN);
    const auto pp0 = prior_predictive(ladder[0], schema, table0, 10000, 9);
    const auto pp5 = prior_predictive(ladder[5], schema, table5, 10000, 9);
    auto mass_below = [](const std::vector<double>& v, double cut) {
      double m = 0.0;
      for (double x : v) {
        if (x < cut) m += 1.0;
      }
      return m / static_cast<double>(v.size());
    };
    CHECK(mass_below(pp5.pi, 0.001) < mass_below(pp0.pi, 0.001));
  }
}
