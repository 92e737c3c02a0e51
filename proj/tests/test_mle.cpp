#include <doctest.h>

#include <cmath>

#include "prevmrp/common.hpp"
#include "prevmrp/mle.hpp"

using namespace prevmrp;

namespace {

Sample sample_from_counts(int k, const std::vector<std::pair<uint8_t, uint8_t>>& bin_and_y) {
  // bin_and_y: (binarized covariate 1 value, outcome) per unit
  Sample s;
  s.rows.resize(k, bin_and_y.size());
  for (size_t i = 0; i < bin_and_y.size(); ++i) {
    s.rows.bin[1][i] = bin_and_y[i].first;
    s.rows.x[1][i] = bin_and_y[i].first;
  }
  s.y.resize(bin_and_y.size());
  s.y_star.resize(bin_and_y.size());
  for (size_t i = 0; i < bin_and_y.size(); ++i) {
    s.y[i] = bin_and_y[i].second;
    s.y_star[i] = bin_and_y[i].second;
  }
  return s;
}

}  // namespace

TEST_CASE("intercept-only fit has the closed form logit(k/n)") {
  const auto schema = CovariateSchema::uniform(2, 4);
  std::vector<std::pair<uint8_t, uint8_t>> units;
  for (int i = 0; i < 40; ++i) units.push_back({0, i < 2 ? uint8_t{1} : uint8_t{0}});
  const auto s = sample_from_counts(2, units);
  ModelSpec spec;  // intercept only
  const auto fit = fit_mle_logistic(s, spec, schema);
  CHECK(fit.status == MleStatus::Converged);
  CHECK(fit.intercept() == doctest::Approx(logit(0.05)).epsilon(1e-8));
  CHECK(fit.prevalence_at_intercept() == doctest::Approx(0.05).epsilon(1e-8));
}

TEST_CASE("zero positives separate instead of converging") {
  const auto schema = CovariateSchema::uniform(2, 4);
  std::vector<std::pair<uint8_t, uint8_t>> units(20, {0, 0});
  const auto s = sample_from_counts(2, units);
  ModelSpec spec;
  const auto fit = fit_mle_logistic(s, spec, schema);
  CHECK(fit.status == MleStatus::Separated);
  CHECK(std::isinf(fit.intercept()));
  CHECK(fit.intercept() < 0);
  CHECK(fit.prevalence_at_intercept() == 0.0);

  std::vector<std::pair<uint8_t, uint8_t>> ones(20, {0, 1});
  const auto fit2 = fit_mle_logistic(sample_from_counts(2, ones), spec, schema);
  CHECK(fit2.status == MleStatus::Separated);
  CHECK(fit2.prevalence_at_intercept() == 1.0);
}

TEST_CASE("binary covariate fit matches the saturated closed form and a Newton oracle") {
  // 2x2 table: x=0 -> 10 successes / 5 failures, x=1 -> 3 successes / 7 failures
  const auto schema = CovariateSchema::uniform(2, 4);
  std::vector<std::pair<uint8_t, uint8_t>> units;
  for (int i = 0; i < 10; ++i) units.push_back({0, 1});
  for (int i = 0; i < 5; ++i) units.push_back({0, 0});
  for (int i = 0; i < 3; ++i) units.push_back({1, 1});
  for (int i = 0; i < 7; ++i) units.push_back({1, 0});
  const auto s = sample_from_counts(2, units);

  ModelSpec spec;
  spec.terms = {{1, TermType::OverallSlope, SlopeSource::Binarized}};
  const auto fit = fit_mle_logistic(s, spec, schema);
  REQUIRE(fit.status == MleStatus::Converged);

  // saturated closed form: beta0 = log-odds at x=0, beta1 = log odds ratio
  CHECK(fit.beta[0] == doctest::Approx(std::log(10.0 / 5.0)).epsilon(1e-6));
  CHECK(fit.beta[1] == doctest::Approx(std::log((3.0 / 7.0) / (10.0 / 5.0))).epsilon(1e-6));

  // independent Newton oracle on the two-parameter likelihood
  double b0 = 0.0, b1 = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double p0 = logistic(b0);
    const double p1 = logistic(b0 + b1);
    const double g0 = (10.0 - 15.0 * p0) + (3.0 - 10.0 * p1);
    const double g1 = 3.0 - 10.0 * p1;
    const double w0 = 15.0 * p0 * (1.0 - p0);
    const double w1 = 10.0 * p1 * (1.0 - p1);
    const double h00 = w0 + w1, h01 = w1, h11 = w1;
    const double det = h00 * h11 - h01 * h01;
    b0 += (h11 * g0 - h01 * g1) / det;
    b1 += (-h01 * g0 + h00 * g1) / det;
  }
  CHECK(fit.beta[0] == doctest::Approx(b0).epsilon(1e-6));
  CHECK(fit.beta[1] == doctest::Approx(b1).epsilon(1e-6));
}

TEST_CASE("varying terms and measurement layers are rejected") {
  const auto schema = CovariateSchema::uniform(2, 4);
  const auto s = sample_from_counts(2, {{0, 1}, {0, 0}, {1, 1}, {1, 0}});
  ModelSpec with_varying;
  with_varying.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous}};
  CHECK_THROWS_AS(fit_mle_logistic(s, with_varying, schema), SchemaError);
  ModelSpec with_meas;
  with_meas.measurement = Measurement::known(1.0, 0.995);
  CHECK_THROWS_AS(fit_mle_logistic(s, with_meas, schema), SchemaError);
}
