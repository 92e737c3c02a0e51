#pragma once

#include <cstdint>
#include <vector>

#include "prevmrp/population.hpp"
#include "prevmrp/schema.hpp"

namespace prevmrp {

enum class CountKind : uint8_t { PopulationN, SampleN };

/// Sparse poststratification table for one model spec: one row per observed
/// combination of the spec's varying-covariate levels. Slope covariates enter
/// through within-cell means of their numeric column. Stored struct-of-arrays
/// and sorted lexicographically by level key, so rebuilding from the same
/// units is deterministic and order-independent.
struct CellTable {
  std::vector<int> varying_covariates;  // schema indices, model term order
  std::vector<ModelTerm> slope_terms;
  CountKind kind = CountKind::PopulationN;

  size_t n_cells = 0;
  std::vector<uint16_t> levels;      // n_cells x varying_covariates.size(), row-major
  std::vector<double> slope_means;   // n_cells x slope_terms.size(), row-major
  std::vector<uint64_t> counts;

  uint64_t total_count() const;
};

CellTable cell_table(const UnitRows& units, const ModelSpec& spec, const CovariateSchema& schema,
                     CountKind kind);

}  // namespace prevmrp
