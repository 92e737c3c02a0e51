#include "prevmrp/schema.hpp"

#include <algorithm>
#include <unordered_set>

namespace prevmrp {

CovariateSchema::CovariateSchema(std::vector<Covariate> covariates)
    : covariates_(std::move(covariates)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : covariates_) {
    if (c.name.empty()) throw SchemaError("covariate with empty name");
    if (c.levels < 2) throw SchemaError("covariate '" + c.name + "' needs at least 2 levels");
    if (!seen.insert(c.name).second) throw SchemaError("duplicate covariate name '" + c.name + "'");
  }
}

int CovariateSchema::index_of(std::string_view name) const {
  for (int k = 0; k < size(); ++k) {
    if (covariates_[static_cast<size_t>(k)].name == name) return k;
  }
  throw SchemaError("unknown covariate '" + std::string(name) + "'");
}

CovariateSchema CovariateSchema::uniform(int k, int levels) {
  std::vector<Covariate> covs;
  covs.reserve(static_cast<size_t>(k));
  for (int i = 1; i <= k; ++i) {
    covs.push_back({"x" + std::to_string(i), levels, true});
  }
  return CovariateSchema(std::move(covs));
}

Measurement Measurement::known(double delta, double gamma) {
  if (delta < 0.0 || delta > 1.0 || gamma < 0.0 || gamma > 1.0) {
    throw ConfigError("known sensitivity/specificity must lie in [0, 1]");
  }
  Measurement m;
  m.kind = MeasurementKind::Known;
  m.delta = delta;
  m.gamma = gamma;
  return m;
}

Measurement Measurement::estimated_specificity(const CalibrationData& c, double delta_fixed) {
  if (c.m_gamma() <= 0) throw ConfigError("specificity calibration needs m_gamma > 0");
  if (c.tn < 0 || c.fp < 0) throw ConfigError("calibration counts must be nonnegative");
  if (delta_fixed < 0.0 || delta_fixed > 1.0) throw ConfigError("fixed sensitivity must lie in [0, 1]");
  Measurement m;
  m.kind = MeasurementKind::EstimatedSpecificity;
  m.delta = delta_fixed;
  m.calibration = c;
  return m;
}

Measurement Measurement::estimated_both(const CalibrationData& c) {
  if (c.m_gamma() <= 0) throw ConfigError("specificity calibration needs m_gamma > 0");
  if (c.m_delta() <= 0) throw ConfigError("sensitivity calibration needs m_delta > 0");
  if (c.tp < 0 || c.fn < 0 || c.tn < 0 || c.fp < 0) {
    throw ConfigError("calibration counts must be nonnegative");
  }
  Measurement m;
  m.kind = MeasurementKind::EstimatedBoth;
  m.calibration = c;
  return m;
}

void ModelSpec::validate(const CovariateSchema& schema) const {
  std::unordered_set<int> seen;
  for (const auto& t : terms) {
    if (t.covariate < 0 || t.covariate >= schema.size()) {
      throw SchemaError("model term references covariate outside the schema");
    }
    if (!seen.insert(t.covariate).second) {
      throw SchemaError("covariate '" + schema.covariate(t.covariate).name +
                        "' appears in more than one term");
    }
    if (t.has_slope() && !schema.covariate(t.covariate).has_continuous) {
      throw SchemaError("slope term on '" + schema.covariate(t.covariate).name +
                        "' requires a continuous version");
    }
  }
  if (measurement.kind == MeasurementKind::Known) {
    if (measurement.delta < 0.0 || measurement.delta > 1.0 || measurement.gamma < 0.0 ||
        measurement.gamma > 1.0) {
      throw SchemaError("known error rates must lie in [0, 1]");
    }
  }
}

const ModelTerm* ModelSpec::term_for(int covariate) const {
  for (const auto& t : terms) {
    if (t.covariate == covariate) return &t;
  }
  return nullptr;
}

int ModelSpec::n_varying() const {
  return static_cast<int>(std::count_if(terms.begin(), terms.end(),
                                        [](const ModelTerm& t) { return t.has_varying(); }));
}

int ModelSpec::n_slopes() const {
  return static_cast<int>(
      std::count_if(terms.begin(), terms.end(), [](const ModelTerm& t) { return t.has_slope(); }));
}

std::vector<ModelSpec> build_model_ladder(const CovariateSchema& schema, LadderVariant variant,
                                          const Measurement& measurement) {
  const int needed = variant == LadderVariant::Basic ? 1 : 5;
  if (schema.size() < needed) {
    throw SchemaError("ladder variant needs at least " + std::to_string(needed) + " covariates");
  }

  std::vector<ModelSpec> ladder;
  ladder.reserve(6);
  for (int m = 0; m <= 5; ++m) {
    ModelSpec spec;
    spec.model_index = m;
    spec.measurement = measurement;
    for (int k = 0; k < std::min(m, schema.size()); ++k) {
      ModelTerm term{k, TermType::VaryingIntercept, SlopeSource::Continuous};
      if (variant != LadderVariant::Basic && k == 2 && m >= 3) {
        term.type = TermType::Both;  // covariate 3 carries both from model 3 on
      }
      if (variant == LadderVariant::TwoOverall && k == 3 && m >= 4) {
        // the binarized slope added at model 3 replaces this varying intercept
        continue;
      }
      spec.terms.push_back(term);
    }
    if (variant == LadderVariant::TwoOverall && m >= 3) {
      spec.terms.push_back({3, TermType::OverallSlope, SlopeSource::Binarized});
    }
    spec.validate(schema);
    ladder.push_back(std::move(spec));
  }
  return ladder;
}

std::string to_string(LadderVariant v) {
  switch (v) {
    case LadderVariant::Basic:
      return "basic";
    case LadderVariant::OneOverall:
      return "one_overall";
    case LadderVariant::TwoOverall:
      return "two_overall";
  }
  return "?";
}

std::string to_string(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::None:
      return "none";
    case MeasurementKind::Known:
      return "known";
    case MeasurementKind::EstimatedSpecificity:
      return "estimated_specificity";
    case MeasurementKind::EstimatedBoth:
      return "estimated_both";
  }
  return "?";
}

}  // namespace prevmrp
