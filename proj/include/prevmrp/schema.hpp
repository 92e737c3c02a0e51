#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "prevmrp/common.hpp"

namespace prevmrp {

struct Covariate {
  std::string name;
  int levels = 0;              // discretized level count, >= 2
  bool has_continuous = true;  // continuous version available for slope terms
};

/// Ordered covariate declarations shared by data generation, cell tables and
/// model specs. Immutable after construction.
class CovariateSchema {
 public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::vector<Covariate> covariates);

  int size() const { return static_cast<int>(covariates_.size()); }
  const Covariate& covariate(int k) const { return covariates_.at(static_cast<size_t>(k)); }
  int index_of(std::string_view name) const;  // throws SchemaError if unknown

  /// Convenience: K covariates named x1..xK with a common level count.
  static CovariateSchema uniform(int k, int levels);

 private:
  std::vector<Covariate> covariates_;
};

enum class TermType : uint8_t { VaryingIntercept, OverallSlope, Both };

/// Which numeric column feeds an overall-slope coefficient: the raw continuous
/// covariate or its two-group (median) split coded 0/1.
enum class SlopeSource : uint8_t { Continuous, Binarized };

struct ModelTerm {
  int covariate = -1;  // index into the schema
  TermType type = TermType::VaryingIntercept;
  SlopeSource slope_source = SlopeSource::Continuous;

  bool has_varying() const { return type != TermType::OverallSlope; }
  bool has_slope() const { return type != TermType::VaryingIntercept; }
};

struct CalibrationData {
  int64_t tp = 0;  // calibration true positives
  int64_t fn = 0;
  int64_t tn = 0;
  int64_t fp = 0;

  int64_t m_delta() const { return tp + fn; }
  int64_t m_gamma() const { return tn + fp; }
};

enum class MeasurementKind : uint8_t { None, Known, EstimatedSpecificity, EstimatedBoth };

struct Measurement {
  MeasurementKind kind = MeasurementKind::None;
  double delta = 1.0;  // sensitivity; fixed value unless estimated
  double gamma = 1.0;  // specificity; fixed value when Known
  CalibrationData calibration;

  static Measurement none() { return {}; }
  static Measurement known(double delta, double gamma);
  static Measurement estimated_specificity(const CalibrationData& c, double delta_fixed);
  static Measurement estimated_both(const CalibrationData& c);

  bool estimates_gamma() const {
    return kind == MeasurementKind::EstimatedSpecificity || kind == MeasurementKind::EstimatedBoth;
  }
  bool estimates_delta() const { return kind == MeasurementKind::EstimatedBoth; }
};

struct ModelSpec {
  int model_index = 0;
  std::vector<ModelTerm> terms;
  Measurement measurement;

  void validate(const CovariateSchema& schema) const;  // throws SchemaError

  const ModelTerm* term_for(int covariate) const;
  int n_varying() const;
  int n_slopes() const;
};

enum class LadderVariant : uint8_t { Basic, OneOverall, TwoOverall };

/// The six sequential models. Basic adds one varying intercept per step.
/// OneOverall additionally gives covariate 3 an overall slope on its
/// continuous version from model 3 on. TwoOverall further adds a slope on the
/// binarized covariate 4 at model 3; from model 4 on that slope stands in for
/// the varying intercept covariate 4 would otherwise get.
std::vector<ModelSpec> build_model_ladder(const CovariateSchema& schema, LadderVariant variant,
                                          const Measurement& measurement);

std::string to_string(LadderVariant v);
std::string to_string(MeasurementKind k);

}  // namespace prevmrp
