#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>

#include "prevmrp/cells.hpp"
#include "prevmrp/rng.hpp"

using namespace prevmrp;

namespace {

UnitRows make_units(const std::vector<std::vector<uint16_t>>& levels_by_unit, int k) {
  UnitRows rows;
  rows.resize(k, levels_by_unit.size());
  for (size_t i = 0; i < levels_by_unit.size(); ++i) {
    for (int c = 0; c < k; ++c) rows.level[static_cast<size_t>(c)][i] = levels_by_unit[i][static_cast<size_t>(c)];
  }
  return rows;
}

ModelSpec varying_spec(int k) {
  ModelSpec spec;
  for (int c = 0; c < k; ++c) {
    spec.terms.push_back({c, TermType::VaryingIntercept, SlopeSource::Continuous});
  }
  return spec;
}

}  // namespace

TEST_CASE("identical units collapse to one cell") {
  const auto schema = CovariateSchema::uniform(2, 4);
  const auto rows = make_units({{1, 2}, {1, 2}, {1, 2}, {1, 2}}, 2);
  const auto table = cell_table(rows, varying_spec(2), schema, CountKind::PopulationN);
  REQUIRE(table.n_cells == 1);
  CHECK(table.counts[0] == 4);
  CHECK(table.levels == std::vector<uint16_t>{1, 2});
}

TEST_CASE("units differing in one level split into two cells") {
  const auto schema = CovariateSchema::uniform(2, 4);
  const auto rows = make_units({{1, 2}, {1, 3}}, 2);
  const auto table = cell_table(rows, varying_spec(2), schema, CountKind::SampleN);
  REQUIRE(table.n_cells == 2);
  CHECK(table.counts == std::vector<uint64_t>{1, 1});
}

TEST_CASE("empty unit list is an error") {
  const auto schema = CovariateSchema::uniform(2, 4);
  UnitRows rows;
  rows.resize(2, 0);
  CHECK_THROWS_AS(cell_table(rows, varying_spec(2), schema, CountKind::PopulationN), DataError);
}

TEST_CASE("cell table matches an exhaustive grouping oracle on a seeded subsample") {
  PopulationConfig cfg;
  cfg.n_units = 10000;
  cfg.levels = 20;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.01;
  cfg.seed = 404;
  const auto pop = generate_population(cfg);
  const auto schema = cfg.schema();
  const auto spec = varying_spec(5);
  const auto table = cell_table(pop.rows, spec, schema, CountKind::PopulationN);

  // oracle: map from the full level tuple to a count
  std::map<std::vector<uint16_t>, uint64_t> oracle;
  for (size_t i = 0; i < pop.rows.n_units; ++i) {
    std::vector<uint16_t> key(5);
    for (int c = 0; c < 5; ++c) key[static_cast<size_t>(c)] = pop.rows.level[static_cast<size_t>(c)][i];
    ++oracle[key];
  }
  REQUIRE(table.n_cells == oracle.size());
  CHECK(table.n_cells <= std::min<uint64_t>(cfg.n_units, 3200000));
  uint64_t total = 0;
  for (size_t j = 0; j < table.n_cells; ++j) {
    std::vector<uint16_t> key(table.levels.begin() + static_cast<ptrdiff_t>(j * 5),
                              table.levels.begin() + static_cast<ptrdiff_t>((j + 1) * 5));
    auto it = oracle.find(key);
    REQUIRE(it != oracle.end());
    CHECK(it->second == table.counts[j]);
    total += table.counts[j];
  }
  CHECK(total == cfg.n_units);
}

TEST_CASE("cell table is order independent and deterministic") {
  PopulationConfig cfg;
  cfg.n_units = 500;
  cfg.levels = 4;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.1;
  cfg.seed = 6;
  const auto pop = generate_population(cfg);
  const auto schema = cfg.schema();
  ModelSpec spec;
  spec.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous},
                {2, TermType::Both, SlopeSource::Continuous}};

  const auto a = cell_table(pop.rows, spec, schema, CountKind::PopulationN);

  // shuffle the unit order and rebuild
  std::vector<size_t> perm(pop.rows.n_units);
  std::iota(perm.begin(), perm.end(), size_t{0});
  Rng rng(9);
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  UnitRows shuffled;
  shuffled.resize(5, pop.rows.n_units);
  for (size_t i = 0; i < perm.size(); ++i) {
    for (int c = 0; c < 5; ++c) {
      shuffled.x[static_cast<size_t>(c)][i] = pop.rows.x[static_cast<size_t>(c)][perm[i]];
      shuffled.level[static_cast<size_t>(c)][i] = pop.rows.level[static_cast<size_t>(c)][perm[i]];
      shuffled.bin[static_cast<size_t>(c)][i] = pop.rows.bin[static_cast<size_t>(c)][perm[i]];
    }
  }
  const auto b = cell_table(shuffled, spec, schema, CountKind::PopulationN);
  CHECK(a.levels == b.levels);
  CHECK(a.counts == b.counts);
  REQUIRE(a.slope_means.size() == b.slope_means.size());
  for (size_t i = 0; i < a.slope_means.size(); ++i) {
    CHECK(a.slope_means[i] == doctest::Approx(b.slope_means[i]).epsilon(1e-12));
  }
}

TEST_CASE("slope means are within-cell averages of the right source column") {
  const auto schema = CovariateSchema::uniform(2, 4);
  UnitRows rows;
  rows.resize(2, 4);
  // one varying covariate (0), one binarized slope covariate (1)
  rows.level[0] = {1, 1, 2, 2};
  rows.x[0] = {0.0, 0.0, 0.0, 0.0};
  rows.x[1] = {0.1, 0.3, -0.2, -0.4};
  rows.bin[1] = {1, 0, 1, 1};
  ModelSpec spec;
  spec.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous},
                {1, TermType::OverallSlope, SlopeSource::Binarized}};
  const auto table = cell_table(rows, spec, schema, CountKind::SampleN);
  REQUIRE(table.n_cells == 2);
  CHECK(table.slope_means[0] == doctest::Approx(0.5));  // cell level 1: (1 + 0) / 2
  CHECK(table.slope_means[1] == doctest::Approx(1.0));  // cell level 2: (1 + 1) / 2

  ModelSpec cont;
  cont.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous},
                {1, TermType::OverallSlope, SlopeSource::Continuous}};
  const auto table2 = cell_table(rows, cont, schema, CountKind::SampleN);
  CHECK(table2.slope_means[0] == doctest::Approx(0.2));
  CHECK(table2.slope_means[1] == doctest::Approx(-0.3));
}
