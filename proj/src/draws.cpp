#include "prevmrp/draws.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "prevmrp/common.hpp"

namespace prevmrp {

int PosteriorDraws::param_index(const std::string& name) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> PosteriorDraws::column(size_t param) const {
  std::vector<double> out;
  out.reserve(total_draws());
  for (size_t c = 0; c < n_chains; ++c) {
    for (size_t i = 0; i < n_samples; ++i) out.push_back(value(c, i, param));
  }
  return out;
}

uint64_t PosteriorDraws::total_divergences() const {
  uint64_t d = 0;
  for (const auto& s : chain_stats) d += s.divergences;
  return d;
}

void PosteriorDraws::write_csv(const std::string& path, const std::vector<std::string>& extra_names,
                               const std::vector<std::vector<double>>& extra_cols) const {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "chain,iteration");
  for (const auto& n : names) std::fprintf(f, ",%s", n.c_str());
  std::fprintf(f, ",lp");
  for (const auto& n : extra_names) std::fprintf(f, ",%s", n.c_str());
  std::fprintf(f, "\n");
  for (size_t c = 0; c < n_chains; ++c) {
    for (size_t i = 0; i < n_samples; ++i) {
      std::fprintf(f, "%zu,%zu", c, i);
      const auto d = draw(c, i);
      for (double v : d) std::fprintf(f, ",%s", format_double(v).c_str());
      std::fprintf(f, ",%s", format_double(lp[c * n_samples + i]).c_str());
      const size_t flat = c * n_samples + i;
      for (const auto& col : extra_cols) std::fprintf(f, ",%s", format_double(col[flat]).c_str());
      std::fprintf(f, "\n");
    }
  }
  if (std::fclose(f) != 0) throw IoError("error closing '" + path + "'");

  nlohmann::json meta;
  meta["n_chains"] = n_chains;
  meta["n_samples"] = n_samples;
  meta["n_params"] = n_params;
  meta["divergence_warning"] = divergence_warning;
  meta["rhat_warning"] = rhat_warning;
  auto& chains = meta["chains"];
  for (const auto& s : chain_stats) {
    chains.push_back({{"divergences", s.divergences},
                      {"max_depth_hits", s.max_depth_hits},
                      {"step_size", s.step_size},
                      {"accept_mean", s.accept_mean}});
  }
  std::FILE* mf = std::fopen((path + ".meta.json").c_str(), "wb");
  if (!mf) throw IoError("cannot open '" + path + ".meta.json' for writing");
  const std::string text = meta.dump(2);
  std::fwrite(text.data(), 1, text.size(), mf);
  std::fputc('\n', mf);
  if (std::fclose(mf) != 0) throw IoError("error closing sidecar for '" + path + "'");
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) return std::nan("");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - std::floor(h);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double median_of(std::vector<double> values) { return quantile_type7(std::move(values), 0.5); }

double draws_median(const PosteriorDraws& draws, size_t param) {
  return median_of(draws.column(param));
}

double draws_quantile(const PosteriorDraws& draws, size_t param, double p) {
  return quantile_type7(draws.column(param), p);
}

}  // namespace prevmrp
