#include "prevmrp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prevmrp/common.hpp"

namespace prevmrp {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Split every chain in half, dropping an odd trailing draw.
std::vector<std::vector<double>> split_halves(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<ptrdiff_t>(half));
    out.emplace_back(c.begin() + static_cast<ptrdiff_t>(half),
                     c.begin() + static_cast<ptrdiff_t>(2 * half));
  }
  return out;
}

/// Acklam's rational approximation to the standard normal quantile.
double inv_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  if (p <= 0.0 || p >= 1.0) return kNan;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Rank-normalize pooled draws (average ranks for ties, Blom offsets).
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
  size_t total = 0;
  for (const auto& c : chains) total += c.size();
  struct Entry {
    double value;
    size_t chain, pos;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  for (size_t c = 0; c < chains.size(); ++c) {
    for (size_t i = 0; i < chains[c].size(); ++i) entries.push_back({chains[c][i], c, i});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& x, const Entry& y) { return x.value < y.value; });
  std::vector<std::vector<double>> out(chains.size());
  for (size_t c = 0; c < chains.size(); ++c) out[c].resize(chains[c].size());
  size_t i = 0;
  const double n = static_cast<double>(total);
  while (i < entries.size()) {
    size_t j = i;
    while (j < entries.size() && entries[j].value == entries[i].value) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j - 1)) + 1.0;
    const double z = inv_normal_cdf((avg_rank - 0.375) / (n + 0.25));
    for (size_t k = i; k < j; ++k) out[entries[k].chain][entries[k].pos] = z;
    i = j;
  }
  return out;
}

struct ChainMoments {
  double w = 0.0;     // mean within-chain variance
  double b_n = 0.0;   // between-chain variance of means
  bool degenerate = false;
};

ChainMoments moments(const std::vector<std::vector<double>>& chains) {
  ChainMoments m;
  const size_t n = chains.front().size();
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mu = mean_of(c);
    means.push_back(mu);
    double s2 = 0.0;
    for (double v : c) s2 += (v - mu) * (v - mu);
    w += s2 / static_cast<double>(n - 1);
  }
  m.w = w / static_cast<double>(chains.size());
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  m.b_n = b / static_cast<double>(chains.size() - 1);
  m.degenerate = m.w <= 0.0 && m.b_n <= 0.0;
  return m;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
  const auto halves = split_halves(chains);
  if (halves.size() < 2 || halves.front().size() < 2) return kNan;
  const auto m = moments(halves);
  if (m.degenerate || m.w <= 0.0) return kNan;
  const double n = static_cast<double>(halves.front().size());
  const double var_plus = (n - 1.0) / n * m.w + m.b_n;
  return std::sqrt(var_plus / m.w);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
  const auto halves = split_halves(rank_normalize(chains));
  const size_t m = halves.size();
  const size_t n = halves.front().size();
  if (m < 2 || n < 4) return kNan;

  const auto mom = moments(halves);
  if (mom.degenerate) return kNan;
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * mom.w + mom.b_n;
  if (var_plus <= 0.0) return kNan;

  // Per-chain autocovariances, combined across chains per lag (Geyer initial
  // monotone sequence on paired sums).
  std::vector<std::vector<double>> centered = halves;
  for (auto& c : centered) {
    const double mu = mean_of(c);
    for (auto& v : c) v -= mu;
  }
  auto acov = [&](size_t lag) {
    double total = 0.0;
    for (const auto& c : centered) {
      double s = 0.0;
      for (size_t i = 0; i + lag < n; ++i) s += c[i] * c[i + lag];
      total += s / static_cast<double>(n);
    }
    return total / static_cast<double>(m);
  };

  auto rho = [&](size_t lag) { return 1.0 - (mom.w - acov(lag)) / var_plus; };

  // Pairs (rho_0 + rho_1), (rho_2 + rho_3), ...: keep while positive, enforce
  // monotone decrease.
  double pair_sum = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (size_t lag = 0; lag + 1 < n; lag += 2) {
    const double rho_a = lag == 0 ? 1.0 : rho(lag);
    double pair = rho_a + rho(lag + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    pair_sum += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * pair_sum, 1.0 / std::log10(static_cast<double>(m * n)));
  const double total_draws = static_cast<double>(m * n);
  return total_draws / tau;
}

double Diagnostics::max_rhat() const {
  double best = kNan;
  for (double v : rhat) {
    if (std::isnan(v)) continue;
    if (std::isnan(best) || v > best) best = v;
  }
  return best;
}

double Diagnostics::min_ess() const {
  double best = kNan;
  for (double v : ess_bulk) {
    if (std::isnan(v)) continue;
    if (std::isnan(best) || v < best) best = v;
  }
  return best;
}

Diagnostics diagnose(const PosteriorDraws& draws) {
  if (draws.n_chains < 2) throw DataError("diagnostics need at least 2 chains");
  if (draws.n_samples < 100) throw DataError("diagnostics need at least 100 draws per chain");

  Diagnostics d;
  d.names = draws.names;
  d.divergences = draws.total_divergences();
  d.rhat.resize(draws.n_params);
  d.ess_bulk.resize(draws.n_params);

  std::vector<std::vector<double>> chains(draws.n_chains);
  for (size_t p = 0; p < draws.n_params; ++p) {
    for (size_t c = 0; c < draws.n_chains; ++c) {
      chains[c].resize(draws.n_samples);
      for (size_t i = 0; i < draws.n_samples; ++i) chains[c][i] = draws.value(c, i, p);
    }
    d.rhat[p] = split_rhat(chains);
    d.ess_bulk[p] = ess_bulk(chains);
  }
  return d;
}

}  // namespace prevmrp
