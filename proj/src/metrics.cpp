#include "prevmrp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "prevmrp/common.hpp"
#include "prevmrp/draws.hpp"

namespace prevmrp {

std::string ConditionKey::group_label() const {
  std::string s = experiment;
  s += "|ladder=" + ladder;
  s += "|n=" + std::to_string(n);
  s += "|pi=" + format_double(pi);
  s += "|zeta1=" + format_double(zeta1);
  s += "|L=" + std::to_string(levels);
  s += "|gamma=" + format_double(gamma_true);
  s += "|mg=" + std::to_string(m_gamma);
  s += "|delta=" + format_double(delta_true);
  return s;
}

std::string ConditionKey::label() const {
  return group_label() + "|model=" + std::to_string(model) + "|method=" + method;
}

double analytic_test_prevalence(double pi, double delta_true, double gamma_true) {
  return (1.0 - gamma_true) * (1.0 - pi) + delta_true * pi;
}

MetricValues compute_metrics(const IterationResult& r) {
  MetricValues m;
  if (!r.has_truth) return m;
  m.available = true;
  m.bias_pi = r.pi_hat_median - r.key.pi;
  m.bias_beta0 = r.beta0_median - r.true_beta0;
  m.delta_pi =
      r.pi_hat_median - analytic_test_prevalence(r.key.pi, r.key.delta_true, r.key.gamma_true);
  return m;
}

BoxSummary summarize_values(std::vector<double> values) {
  BoxSummary s;
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  s.count = values.size();
  if (values.empty()) return s;

  std::sort(values.begin(), values.end());
  auto quantile_sorted = [&](double p) {
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const size_t lo = static_cast<size_t>(std::floor(h));
    const size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - std::floor(h)) * (values[hi] - values[lo]);
  };
  s.median = quantile_sorted(0.5);
  s.q1 = quantile_sorted(0.25);
  s.q3 = quantile_sorted(0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.whisker_lo = s.q3;
  s.whisker_hi = s.q1;
  for (double v : values) {
    if (v >= lo_fence && v <= hi_fence) {
      s.whisker_lo = std::min(s.whisker_lo, v);
      s.whisker_hi = std::max(s.whisker_hi, v);
    } else {
      ++s.n_outliers;
    }
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  s.mean = mean;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
    s.mc_se = sd / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

std::vector<ConditionSummary> aggregate(const std::vector<IterationResult>& results) {
  struct Group {
    ConditionKey key;
    std::map<std::string, std::vector<double>> metric_values;
  };
  std::vector<Group> groups;
  std::map<std::string, size_t> index;

  auto push = [](Group& g, const std::string& metric, double v) {
    g.metric_values[metric].push_back(v);
  };

  for (const auto& r : results) {
    const std::string label = r.key.label();
    auto [it, inserted] = index.try_emplace(label, groups.size());
    if (inserted) {
      groups.push_back(Group{r.key, {}});
    }
    Group& g = groups[it->second];
    const MetricValues m = compute_metrics(r);
    if (m.available) {
      push(g, "bias_pi", m.bias_pi);
      push(g, "bias_beta0", m.bias_beta0);
      push(g, "delta_pi", m.delta_pi);
    }
    push(g, "pi_hat", r.pi_hat_median);
    push(g, "pi_hat_mean", r.pi_hat_mean);
    push(g, "pi_s", r.pi_s_median);
    push(g, "pr_ystar", r.pr_ystar_median);
    push(g, "beta0", r.beta0_median);
    push(g, "sample_test_prev", r.sample_test_prev);
    if (!std::isnan(r.gamma_median)) push(g, "gamma_hat", r.gamma_median);
    if (!std::isnan(r.delta_median)) push(g, "delta_hat", r.delta_median);
  }

  // Fixed metric order for stable output files.
  static const char* kOrder[] = {"bias_pi", "bias_beta0", "delta_pi",   "pi_hat",
                                 "pi_hat_mean", "pi_s",  "pr_ystar",   "beta0",
                                 "sample_test_prev", "gamma_hat", "delta_hat"};
  std::vector<ConditionSummary> out;
  for (auto& g : groups) {
    for (const char* metric : kOrder) {
      auto it = g.metric_values.find(metric);
      if (it == g.metric_values.end() || it->second.empty()) continue;
      ConditionSummary row;
      row.key = g.key;
      row.metric = metric;
      row.box = summarize_values(std::move(it->second));
      if (row.box.count == 0) continue;
      out.push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace prevmrp
