#include "prevmrp/cells.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace prevmrp {

uint64_t CellTable::total_count() const {
  return std::accumulate(counts.begin(), counts.end(), static_cast<uint64_t>(0));
}

namespace {

struct KeyHash {
  size_t operator()(const std::vector<uint16_t>& key) const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (uint16_t v : key) {
      h ^= v;
      h *= 0x100000001b3ULL;
    }
    return static_cast<size_t>(h);
  }
};

}  // namespace

CellTable cell_table(const UnitRows& units, const ModelSpec& spec, const CovariateSchema& schema,
                     CountKind kind) {
  spec.validate(schema);
  if (units.n_units == 0) throw DataError("cell_table: no units");
  if (units.n_covariates < schema.size()) {
    throw DataError("cell_table: units carry fewer covariates than the schema");
  }

  CellTable table;
  table.kind = kind;
  for (const auto& t : spec.terms) {
    if (t.has_varying()) table.varying_covariates.push_back(t.covariate);
    if (t.has_slope()) table.slope_terms.push_back(t);
  }
  const size_t kv = table.varying_covariates.size();
  const size_t ks = table.slope_terms.size();

  std::unordered_map<std::vector<uint16_t>, size_t, KeyHash> index;
  std::vector<std::vector<uint16_t>> keys;
  std::vector<uint64_t> counts;
  std::vector<std::vector<double>> slope_sums;

  std::vector<uint16_t> key(kv);
  for (size_t i = 0; i < units.n_units; ++i) {
    for (size_t c = 0; c < kv; ++c) {
      key[c] = units.level[static_cast<size_t>(table.varying_covariates[c])][i];
    }
    auto [it, inserted] = index.try_emplace(key, keys.size());
    if (inserted) {
      keys.push_back(key);
      counts.push_back(0);
      slope_sums.emplace_back(ks, 0.0);
    }
    const size_t cell = it->second;
    counts[cell] += 1;
    for (size_t s = 0; s < ks; ++s) {
      const auto& term = table.slope_terms[s];
      const size_t cov = static_cast<size_t>(term.covariate);
      const double v = term.slope_source == SlopeSource::Continuous
                           ? units.x[cov][i]
                           : static_cast<double>(units.bin[cov][i]);
      slope_sums[cell][s] += v;
    }
  }

  std::vector<size_t> order(keys.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return keys[a] < keys[b]; });

  table.n_cells = keys.size();
  table.levels.reserve(table.n_cells * kv);
  table.slope_means.reserve(table.n_cells * ks);
  table.counts.reserve(table.n_cells);
  for (size_t cell : order) {
    table.levels.insert(table.levels.end(), keys[cell].begin(), keys[cell].end());
    table.counts.push_back(counts[cell]);
    for (size_t s = 0; s < ks; ++s) {
      table.slope_means.push_back(slope_sums[cell][s] / static_cast<double>(counts[cell]));
    }
  }
  return table;
}

}  // namespace prevmrp
