#include <doctest.h>

#include "prevmrp/schema.hpp"

using namespace prevmrp;

namespace {

bool has_term(const ModelSpec& spec, int cov, TermType type) {
  for (const auto& t : spec.terms) {
    if (t.covariate == cov && t.type == type) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("schema validation") {
  CHECK_THROWS_AS(CovariateSchema({{"x1", 1, true}}), SchemaError);
  CHECK_THROWS_AS(CovariateSchema({{"x1", 4, true}, {"x1", 4, true}}), SchemaError);
  const auto s = CovariateSchema::uniform(5, 20);
  CHECK(s.size() == 5);
  CHECK(s.index_of("x3") == 2);
  CHECK_THROWS_AS(s.index_of("nope"), SchemaError);
}

TEST_CASE("basic ladder adds one varying intercept per model") {
  const auto schema = CovariateSchema::uniform(5, 20);
  const auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
  REQUIRE(ladder.size() == 6);
  CHECK(ladder[0].terms.empty());  // intercept only
  CHECK(ladder[2].terms.size() == 2);
  CHECK(has_term(ladder[2], 0, TermType::VaryingIntercept));
  CHECK(has_term(ladder[2], 1, TermType::VaryingIntercept));
  CHECK(ladder[5].terms.size() == 5);
  for (int m = 1; m <= 5; ++m) {
    // each model's terms contain the previous model's
    for (const auto& t : ladder[static_cast<size_t>(m - 1)].terms) {
      CHECK(has_term(ladder[static_cast<size_t>(m)], t.covariate, t.type));
    }
  }
}

TEST_CASE("one-overall ladder gives covariate 3 both roles from model 3") {
  const auto schema = CovariateSchema::uniform(5, 20);
  const auto ladder = build_model_ladder(schema, LadderVariant::OneOverall, Measurement::none());
  CHECK(!has_term(ladder[2], 2, TermType::Both));
  CHECK(has_term(ladder[3], 2, TermType::Both));
  CHECK(has_term(ladder[5], 2, TermType::Both));
  CHECK(ladder[3].n_slopes() == 1);
  CHECK(has_term(ladder[4], 3, TermType::VaryingIntercept));
}

TEST_CASE("two-overall ladder replaces the covariate-4 varying intercept") {
  const auto schema = CovariateSchema::uniform(5, 20);
  const auto ladder = build_model_ladder(schema, LadderVariant::TwoOverall, Measurement::none());
  // model 3: slopes on continuous x3 and binarized x4 both enter
  CHECK(has_term(ladder[3], 2, TermType::Both));
  CHECK(has_term(ladder[3], 3, TermType::OverallSlope));
  CHECK(ladder[3].n_slopes() == 2);
  // model 4: the x4 slope stands in for its varying intercept
  CHECK(!has_term(ladder[4], 3, TermType::VaryingIntercept));
  CHECK(has_term(ladder[4], 3, TermType::OverallSlope));
  CHECK(ladder[4].n_varying() == 3);
  // model 5 adds covariate 5's varying intercept back on top
  CHECK(has_term(ladder[5], 4, TermType::VaryingIntercept));
  CHECK(ladder[5].n_varying() == 4);
  const ModelTerm* slope = nullptr;
  for (const auto& t : ladder[4].terms) {
    if (t.covariate == 3) slope = &t;
  }
  REQUIRE(slope != nullptr);
  CHECK(slope->slope_source == SlopeSource::Binarized);
}

TEST_CASE("ladder variants need five covariates") {
  const auto small = CovariateSchema::uniform(3, 4);
  CHECK_THROWS_AS(build_model_ladder(small, LadderVariant::OneOverall, Measurement::none()),
                  SchemaError);
  CHECK_THROWS_AS(build_model_ladder(small, LadderVariant::TwoOverall, Measurement::none()),
                  SchemaError);
}

TEST_CASE("model spec validation") {
  const auto schema = CovariateSchema({{"a", 4, true}, {"b", 4, false}});
  ModelSpec bad;
  bad.terms = {{5, TermType::VaryingIntercept, SlopeSource::Continuous}};
  CHECK_THROWS_AS(bad.validate(schema), SchemaError);
  ModelSpec slope_on_discrete;
  slope_on_discrete.terms = {{1, TermType::OverallSlope, SlopeSource::Continuous}};
  CHECK_THROWS_AS(slope_on_discrete.validate(schema), SchemaError);
  ModelSpec dup;
  dup.terms = {{0, TermType::VaryingIntercept, SlopeSource::Continuous},
               {0, TermType::OverallSlope, SlopeSource::Continuous}};
  CHECK_THROWS_AS(dup.validate(schema), SchemaError);
  CHECK_THROWS_AS(Measurement::known(1.2, 0.5), ConfigError);
  CHECK_THROWS_AS(Measurement::estimated_specificity(CalibrationData{0, 0, 0, 0}, 1.0),
                  ConfigError);
}
