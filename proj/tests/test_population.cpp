#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "prevmrp/common.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/rng.hpp"

using namespace prevmrp;

TEST_CASE("intercept solution") {
  // closed form: logit(pi) - zeta1 * K * (a + b) / 2
  CHECK(solve_intercept(0.01, 0.3, 5, -0.5, 0.5) == doctest::Approx(-4.595).epsilon(1e-4));
  CHECK(solve_intercept(0.5, 0.0, 5, -0.5, 0.5) == doctest::Approx(0.0));
  CHECK(solve_intercept(0.01, 0.3, 5, 0.0, 1.0) ==
        doctest::Approx(logit(0.01) - 0.75).epsilon(1e-12));
  CHECK_THROWS_AS(solve_intercept(0.0, 0.3, 5, -0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(solve_intercept(1.0, 0.3, 5, -0.5, 0.5), ConfigError);
}

TEST_CASE("discretize splits into equal-count ordered bins") {
  const std::vector<double> x{1, 2, 3, 4};
  const auto lev = discretize(x, 2);
  CHECK(lev == std::vector<uint16_t>{0, 0, 1, 1});

  // shuffled 1..100 into quartiles of exactly 25
  std::vector<double> big(100);
  std::iota(big.begin(), big.end(), 1.0);
  Rng rng(3);
  for (size_t i = big.size(); i > 1; --i) std::swap(big[i - 1], big[rng.below(i)]);
  const auto lev4 = discretize(big, 4);
  std::vector<int> counts(4, 0);
  for (size_t i = 0; i < big.size(); ++i) {
    ++counts[lev4[i]];
    for (size_t j = 0; j < big.size(); ++j) {
      if (big[i] < big[j]) CHECK(lev4[i] <= lev4[j]);
    }
  }
  CHECK(counts == std::vector<int>{25, 25, 25, 25});
}

TEST_CASE("discretize half a million uniforms into twenty bins of 25000") {
  Rng rng(8);
  std::vector<double> x(500000);
  for (auto& v : x) v = rng.uniform(-0.5, 0.5);
  const auto lev = discretize(x, 20);
  std::vector<int> counts(20, 0);
  for (auto l : lev) ++counts[l];
  for (int c : counts) CHECK(c == 25000);
}

TEST_CASE("discretize breaks ties by stable input order") {
  const std::vector<double> x(10, 1.0);
  const auto lev = discretize(x, 2);
  CHECK(lev == std::vector<uint16_t>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("discretize is permutation equivariant") {
  Rng rng(21);
  std::vector<double> x(1000);
  for (auto& v : x) v = rng.normal();
  const auto base = discretize(x, 7);
  std::vector<size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), size_t{0});
  for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<double> shuffled(x.size());
  for (size_t i = 0; i < x.size(); ++i) shuffled[i] = x[perm[i]];
  const auto lev = discretize(shuffled, 7);
  for (size_t i = 0; i < x.size(); ++i) CHECK(lev[i] == base[perm[i]]);
}

TEST_CASE("flat population has exactly the target probability") {
  PopulationConfig cfg;
  cfg.n_units = 2000;
  cfg.levels = 4;
  cfg.zeta1 = 0.0;
  cfg.prevalence = 0.1;
  cfg.seed = 5;
  const auto pop = generate_population(cfg);
  for (double p : pop.pi) CHECK(p == 0.1);
}

TEST_CASE("population mean probability matches an independent Monte Carlo oracle") {
  // Oracle: 10^6 draws of logistic(zeta0 + 0.3 * sum of five uniforms),
  // evaluated with its own stream. Frozen value 0.010183, se ~ 2e-6.
  Rng oracle_rng(987654);
  const double zeta0 = solve_intercept(0.01, 0.3, 5, -0.5, 0.5);
  double oracle = 0.0;
  const int oracle_n = 1000000;
  for (int i = 0; i < oracle_n; ++i) {
    double eta = zeta0;
    for (int k = 0; k < 5; ++k) eta += 0.3 * oracle_rng.uniform(-0.5, 0.5);
    oracle += logistic(eta);
  }
  oracle /= oracle_n;
  CHECK(oracle == doctest::Approx(0.010183).epsilon(2e-3));

  PopulationConfig cfg;
  cfg.n_units = 500000;
  cfg.levels = 20;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.01;
  cfg.seed = 11;
  const auto pop = generate_population(cfg);
  CHECK(std::abs(pop.mean_pi() - oracle) < 3e-5);
  CHECK(std::abs(pop.mean_pi() - 0.01) < 0.001);
  CHECK(std::abs(pop.mean_y() - 0.01) < 0.002);
}

TEST_CASE("population generation is reproducible") {
  PopulationConfig cfg;
  cfg.n_units = 5000;
  cfg.levels = 10;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.01;
  cfg.seed = 77;
  const auto a = generate_population(cfg);
  const auto b = generate_population(cfg);
  CHECK(a.y == b.y);
  CHECK(a.pi == b.pi);
  for (int k = 0; k < 5; ++k) CHECK(a.rows.x[k] == b.rows.x[k]);
}

TEST_CASE("measurement corruption") {
  std::vector<uint8_t> y(1000);
  for (size_t i = 0; i < y.size(); ++i) y[i] = i % 3 == 0;

  SUBCASE("perfect test copies statuses") {
    CHECK(corrupt_measurements(y, 1.0, 1.0, 9) == y);
  }
  SUBCASE("sensitivity one never flips a positive, specificity one never flips a negative") {
    const auto out = corrupt_measurements(y, 1.0, 0.5, 9);
    for (size_t i = 0; i < y.size(); ++i) {
      if (y[i]) CHECK(out[i] == 1);
    }
    const auto out2 = corrupt_measurements(y, 0.5, 1.0, 9);
    for (size_t i = 0; i < y.size(); ++i) {
      if (!y[i]) CHECK(out2[i] == 0);
    }
  }
  SUBCASE("all-negative cohort yields the false-positive rate") {
    std::vector<uint8_t> zeros(1000000, 0);
    const auto out = corrupt_measurements(zeros, 0.951, 0.996, 123);
    double frac = 0.0;
    for (auto v : out) frac += v;
    frac /= static_cast<double>(out.size());
    CHECK(std::abs(frac - 0.004) < 0.0002);
  }
  SUBCASE("observed prevalence matches the analytic map") {
    // E mean(y*) = pi * delta + (1 - pi)(1 - gamma) = 0.01347 at pi = 0.01
    PopulationConfig cfg;
    cfg.n_units = 1000000;
    cfg.levels = 4;
    cfg.zeta1 = 0.0;
    cfg.prevalence = 0.01;
    cfg.seed = 31;
    const auto pop = generate_population(cfg);
    const auto out = corrupt_measurements(pop.y, 0.951, 0.996, 33);
    double frac = 0.0;
    for (auto v : out) frac += v;
    frac /= static_cast<double>(out.size());
    CHECK(std::abs(frac - 0.01347) < 0.0005);
  }
}

TEST_CASE("simple random sampling") {
  PopulationConfig cfg;
  cfg.n_units = 3000;
  cfg.levels = 4;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.1;
  cfg.seed = 19;
  const auto pop = generate_population(cfg);

  SUBCASE("full-size sample is the population") {
    const auto s = draw_sample(pop, pop.rows.n_units, 4);
    CHECK(s.size() == pop.rows.n_units);
    for (size_t i = 0; i < s.size(); ++i) CHECK(s.source_index[i] == i);
  }
  SUBCASE("same seed, same index set") {
    const auto a = draw_sample(pop, 100, 5);
    const auto b = draw_sample(pop, 100, 5);
    CHECK(a.source_index == b.source_index);
    const auto c = draw_sample(pop, 100, 6);
    CHECK(a.source_index != c.source_index);
  }
  SUBCASE("size errors") {
    CHECK_THROWS_AS(draw_sample(pop, 0, 5), ConfigError);
    CHECK_THROWS_AS(draw_sample(pop, pop.rows.n_units + 1, 5), ConfigError);
  }
  SUBCASE("sample means are unbiased for the population mean") {
    const double truth = pop.mean_y();
    double acc = 0.0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
      const auto s = draw_sample(pop, 500, 1000 + static_cast<uint64_t>(r));
      double m = 0.0;
      for (auto v : s.y) m += v;
      acc += m / static_cast<double>(s.size());
    }
    acc /= reps;
    // se of the mean of 100 SRS means ~ sqrt(0.1*0.9/500)/10 ~ 0.0013
    CHECK(std::abs(acc - truth) < 0.005);
  }
}

TEST_CASE("population dump has the documented columnar layout") {
  PopulationConfig cfg;
  cfg.n_units = 50;
  cfg.n_covariates = 2;
  cfg.levels = 4;
  cfg.zeta1 = 0.3;
  cfg.prevalence = 0.1;
  cfg.seed = 61;
  const auto pop = generate_population(cfg);
  const auto path =
      (std::filesystem::temp_directory_path() / "prevmrp_population_dump.csv").string();
  write_population_csv(path, pop);

  std::ifstream in(path);
  REQUIRE(in);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x1,x2,level_x1,level_x2,y");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 50);
  std::filesystem::remove(path);
}

TEST_CASE("observable bounds three-case formula") {
  const auto hi = observable_bounds(0.95, 0.996);
  CHECK(hi.defined);
  CHECK(hi.lo == doctest::Approx(0.004));
  CHECK(hi.hi == doctest::Approx(0.95));

  const auto lo = observable_bounds(0.3, 0.5);
  CHECK(lo.defined);
  CHECK(lo.lo == doctest::Approx(0.3));
  CHECK(lo.hi == doctest::Approx(0.5));

  const auto undef = observable_bounds(0.5, 0.5);
  CHECK(!undef.defined);

  CHECK_THROWS_AS(observable_bounds(1.5, 0.5), ConfigError);
}

TEST_CASE("expected test prevalence always lies inside the defined bounds") {
  // grid with 0.05 spacing, skipping the undefined diagonal
  Rng rng(55);
  for (int di = 0; di <= 20; ++di) {
    for (int gi = 0; gi <= 20; ++gi) {
      const double delta = di * 0.05;
      const double gamma = gi * 0.05;
      const auto b = observable_bounds(delta, gamma);
      if (!b.defined) continue;
      for (int r = 0; r < 20; ++r) {
        const double pi = rng.uniform();
        const double p = (1.0 - gamma) * (1.0 - pi) + delta * pi;
        CHECK(p >= b.lo - 1e-12);
        CHECK(p <= b.hi + 1e-12);
      }
    }
  }
}

TEST_CASE("calibration counts on and off the published grid") {
  auto c = calibration_counts(0.995, 800);
  CHECK(c.fp == 4);
  CHECK(c.tn == 796);
  c = calibration_counts(0.98, 400);
  CHECK(c.fp == 8);
  CHECK(c.tn == 392);
  c = calibration_counts(1.0, 1200);
  CHECK(c.fp == 0);
  CHECK(c.tn == 1200);
  CHECK_THROWS_AS(calibration_counts(0.995, 500), ConfigError);  // 2.5 expected FPs

  const auto s = sensitivity_calibration_counts(1.0, 102);
  CHECK(s.tp == 102);
  CHECK(s.fn == 0);
}
