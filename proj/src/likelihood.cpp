#include "prevmrp/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "prevmrp/common.hpp"

namespace prevmrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kTScale2Nu = 3.0 * 2.5 * 2.5;  // nu * s^2 for t_3(0, 2.5)
constexpr size_t kBlock = 512;                  // gradient reduction block size

}  // namespace

double student_t_logpdf(double x) { return -2.0 * std::log1p(x * x / kTScale2Nu); }
double student_t_dlogpdf(double x) { return -4.0 * x / (kTScale2Nu + x * x); }

ParamLayout ParamLayout::build(const ModelSpec& spec, const CovariateSchema& schema) {
  spec.validate(schema);
  ParamLayout layout;
  layout.beta0 = 0;
  layout.names.push_back("beta0");
  int pos = 1;
  for (const auto& t : spec.terms) {
    if (!t.has_slope()) continue;
    SlopeEntry e;
    e.covariate = t.covariate;
    e.source = t.slope_source;
    e.index = pos++;
    const auto& name = schema.covariate(t.covariate).name;
    layout.names.push_back("b_" + name + (e.source == SlopeSource::Binarized ? "_bin" : ""));
    layout.slopes.push_back(e);
  }
  for (const auto& t : spec.terms) {
    if (!t.has_varying()) continue;
    VaryingBlock b;
    b.covariate = t.covariate;
    b.levels = schema.covariate(t.covariate).levels;
    b.z_offset = pos;
    pos += b.levels;
    const auto& name = schema.covariate(t.covariate).name;
    for (int l = 0; l < b.levels; ++l) {
      layout.names.push_back("alpha_" + name + "[" + std::to_string(l) + "]");
    }
    layout.varying.push_back(b);
  }
  for (auto& b : layout.varying) {
    b.sigma_index = pos++;
    layout.names.push_back("sigma_" + schema.covariate(b.covariate).name);
  }
  if (spec.measurement.estimates_delta()) {
    layout.delta_index = pos++;
    layout.names.push_back("delta");
  }
  if (spec.measurement.estimates_gamma()) {
    layout.gamma_index = pos++;
    layout.names.push_back("gamma");
  }
  layout.n_params = pos;
  return layout;
}

namespace {

struct RowKeyHash {
  size_t operator()(const std::string& key) const { return std::hash<std::string>{}(key); }
};

}  // namespace

LikelihoodData LikelihoodData::build(const Sample& sample, const ModelSpec& spec,
                                     const CovariateSchema& schema) {
  if (sample.y_star.size() != sample.rows.n_units) {
    throw DataError("sample has no observed outcomes (apply the measurement step first)");
  }
  LikelihoodData data = LikelihoodData::empty(spec);
  const size_t kv = static_cast<size_t>(data.n_varying);
  const size_t ks = static_cast<size_t>(data.n_slopes);

  std::vector<int> varying_cov;
  std::vector<ModelTerm> slope_terms;
  for (const auto& t : spec.terms) {
    if (t.has_varying()) varying_cov.push_back(t.covariate);
    if (t.has_slope()) slope_terms.push_back(t);
  }
  (void)schema;

  std::unordered_map<std::string, size_t, RowKeyHash> index;
  std::vector<std::string> keys;
  std::string key;
  key.resize(kv * sizeof(uint16_t) + ks * sizeof(double));
  std::vector<double> slope_vals(ks);

  for (size_t i = 0; i < sample.rows.n_units; ++i) {
    char* p = key.data();
    for (size_t c = 0; c < kv; ++c) {
      const uint16_t l = sample.rows.level[static_cast<size_t>(varying_cov[c])][i];
      std::memcpy(p, &l, sizeof l);
      p += sizeof l;
    }
    for (size_t s = 0; s < ks; ++s) {
      const auto& term = slope_terms[s];
      const size_t cov = static_cast<size_t>(term.covariate);
      slope_vals[s] = term.slope_source == SlopeSource::Continuous
                          ? sample.rows.x[cov][i]
                          : static_cast<double>(sample.rows.bin[cov][i]);
      std::memcpy(p, &slope_vals[s], sizeof(double));
      p += sizeof(double);
    }
    auto [it, inserted] = index.try_emplace(key, keys.size());
    if (inserted) {
      keys.push_back(key);
      for (size_t c = 0; c < kv; ++c) {
        data.levels.push_back(sample.rows.level[static_cast<size_t>(varying_cov[c])][i]);
      }
      for (size_t s = 0; s < ks; ++s) data.slopes.push_back(slope_vals[s]);
      data.trials.push_back(0.0);
      data.successes.push_back(0.0);
    }
    const size_t r = it->second;
    data.trials[r] += 1.0;
    data.successes[r] += sample.y_star[i] ? 1.0 : 0.0;
  }
  data.n_rows = data.trials.size();

  // Canonical row order, independent of unit order.
  std::vector<size_t> order(data.n_rows);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return keys[a] < keys[b]; });
  LikelihoodData sorted = LikelihoodData::empty(spec);
  sorted.n_rows = data.n_rows;
  for (size_t r : order) {
    for (size_t c = 0; c < kv; ++c) sorted.levels.push_back(data.levels[r * kv + c]);
    for (size_t s = 0; s < ks; ++s) sorted.slopes.push_back(data.slopes[r * ks + s]);
    sorted.trials.push_back(data.trials[r]);
    sorted.successes.push_back(data.successes[r]);
  }
  return sorted;
}

LikelihoodData LikelihoodData::empty(const ModelSpec& spec) {
  LikelihoodData data;
  data.n_varying = spec.n_varying();
  data.n_slopes = spec.n_slopes();
  data.n_rows = 0;
  return data;
}

double LikelihoodData::total_trials() const {
  return std::accumulate(trials.begin(), trials.end(), 0.0);
}

double LikelihoodData::total_successes() const {
  return std::accumulate(successes.begin(), successes.end(), 0.0);
}

LogDensity::LogDensity(LikelihoodData data, const ModelSpec& spec, ParamLayout layout)
    : data_(std::move(data)), layout_(std::move(layout)), kind_(spec.measurement.kind) {
  fixed_delta_ = spec.measurement.delta;
  fixed_gamma_ = spec.measurement.gamma;
  if (kind_ == MeasurementKind::None) {
    fixed_delta_ = 1.0;
    fixed_gamma_ = 1.0;
  }
  const auto& cal = spec.measurement.calibration;
  if (spec.measurement.estimates_gamma()) {
    if (cal.fp > 0) {
      gamma_a_ = static_cast<double>(cal.tn);
      gamma_b_ = static_cast<double>(cal.fp);
    } else {
      gamma_a_ = static_cast<double>(cal.tn) + 1.0;
      gamma_b_ = 1.0;
    }
  }
  if (spec.measurement.estimates_delta()) {
    if (cal.fn > 0) {
      delta_a_ = static_cast<double>(cal.tp);
      delta_b_ = static_cast<double>(cal.fn);
    } else {
      delta_a_ = static_cast<double>(cal.tp) + 1.0;
      delta_b_ = 1.0;
    }
  }
  n_blocks_ = data_.n_rows == 0 ? 0 : (data_.n_rows + kBlock - 1) / kBlock;
  if (layout_.varying.size() > 16 || layout_.slopes.size() > 16) {
    throw ConfigError("more than 16 varying or slope terms are not supported");
  }
}

void LogDensity::prepare(GradWorkspace& ws) const {
  ws.block_acc.assign(n_blocks_ * static_cast<size_t>(layout_.n_params), 0.0);
  ws.block_ll.assign(n_blocks_, 0.0);
  ws.block_dgamma.assign(n_blocks_, 0.0);
  ws.block_ddelta.assign(n_blocks_, 0.0);
}

double LogDensity::rows_ll_grad(std::span<const double> u, std::span<double> grad,
                                GradWorkspace& ws, bool with_grad) const {
  const size_t kv = static_cast<size_t>(data_.n_varying);
  const size_t ks = static_cast<size_t>(data_.n_slopes);
  const int npar = layout_.n_params;

  const double delta =
      layout_.delta_index >= 0 ? logistic(u[static_cast<size_t>(layout_.delta_index)]) : fixed_delta_;
  const double gamma =
      layout_.gamma_index >= 0 ? logistic(u[static_cast<size_t>(layout_.gamma_index)]) : fixed_gamma_;
  const double c0 = 1.0 - gamma;
  const double c1 = delta + gamma - 1.0;

  // Hoist layout lookups out of the row loop.
  double sig[16];
  uint32_t z_off[16];
  uint32_t sig_idx[16];
  uint32_t slope_idx[16];
  const size_t nv = layout_.varying.size();
  for (size_t v = 0; v < nv; ++v) {
    sig[v] = std::exp(u[static_cast<size_t>(layout_.varying[v].sigma_index)]);
    z_off[v] = static_cast<uint32_t>(layout_.varying[v].z_offset);
    sig_idx[v] = static_cast<uint32_t>(layout_.varying[v].sigma_index);
  }
  for (size_t s = 0; s < ks && s < 16; ++s) {
    slope_idx[s] = static_cast<uint32_t>(layout_.slopes[s].index);
  }

  bool impossible = false;

  // Block-structured reduction: partial sums land in per-block slots and are
  // combined in block order, so the result is bit-identical for any thread
  // count (and to the single-threaded run).
#pragma omp parallel for schedule(static) reduction(|| : impossible)
  for (int64_t blk = 0; blk < static_cast<int64_t>(n_blocks_); ++blk) {
    const size_t lo = static_cast<size_t>(blk) * kBlock;
    const size_t hi = std::min(lo + kBlock, data_.n_rows);
    double* acc =
        with_grad ? ws.block_acc.data() + static_cast<size_t>(blk) * static_cast<size_t>(npar) : nullptr;
    if (with_grad) std::fill(acc, acc + npar, 0.0);
    double ll = 0.0;
    double dgamma = 0.0, ddelta = 0.0;
    for (size_t r = lo; r < hi; ++r) {
      double eta = u[0];
      for (size_t s = 0; s < ks; ++s) {
        eta += u[slope_idx[s]] * data_.slopes[r * ks + s];
      }
      const uint16_t* lev = data_.levels.data() + r * kv;
      for (size_t v = 0; v < nv; ++v) {
        eta += sig[v] * u[z_off[v] + lev[v]];
      }
      const double pi = logistic(eta);
      double pstar = c0 + c1 * pi;
      const double m = data_.trials[r];
      const double s_r = data_.successes[r];
      if (pstar <= 0.0) {
        if (s_r > 0.0) {
          impossible = true;
          break;
        }
        pstar = kProbFloor;
      } else if (pstar >= 1.0) {
        if (s_r < m) {
          impossible = true;
          break;
        }
        pstar = 1.0 - kProbFloor;
      }
      const double pc = std::min(std::max(pstar, kProbFloor), 1.0 - kProbFloor);
      // Most rows are all-failure or all-success singletons; skip the dead
      // log and division for them.
      double dldp;
      if (s_r == 0.0) {
        ll += m * std::log1p(-pc);
        dldp = -m / (1.0 - pc);
      } else if (s_r == m) {
        ll += m * std::log(pc);
        dldp = m / pc;
      } else {
        ll += s_r * std::log(pc) + (m - s_r) * std::log1p(-pc);
        dldp = s_r / pc - (m - s_r) / (1.0 - pc);
      }
      if (with_grad) {
        const double w = dldp * c1 * pi * (1.0 - pi);
        acc[0] += w;
        for (size_t s = 0; s < ks; ++s) {
          acc[slope_idx[s]] += w * data_.slopes[r * ks + s];
        }
        for (size_t v = 0; v < nv; ++v) {
          const size_t zi = z_off[v] + lev[v];
          const double z = u[zi];
          acc[zi] += w * sig[v];
          acc[sig_idx[v]] += w * sig[v] * z;
        }
        if (layout_.gamma_index >= 0) dgamma += dldp * (pi - 1.0);
        if (layout_.delta_index >= 0) ddelta += dldp * pi;
      }
    }
    ws.block_ll[static_cast<size_t>(blk)] = ll;
    ws.block_dgamma[static_cast<size_t>(blk)] = dgamma;
    ws.block_ddelta[static_cast<size_t>(blk)] = ddelta;
  }

  if (impossible) return kNegInf;

  double ll = 0.0;
  for (size_t b = 0; b < n_blocks_; ++b) ll += ws.block_ll[b];
  if (with_grad) {
    for (size_t b = 0; b < n_blocks_; ++b) {
      const double* acc = ws.block_acc.data() + b * static_cast<size_t>(npar);
      for (int p = 0; p < npar; ++p) grad[static_cast<size_t>(p)] += acc[p];
    }
    double dgamma_acc = 0.0, ddelta_acc = 0.0;
    for (size_t b = 0; b < n_blocks_; ++b) {
      dgamma_acc += ws.block_dgamma[b];
      ddelta_acc += ws.block_ddelta[b];
    }
    if (layout_.gamma_index >= 0) {
      grad[static_cast<size_t>(layout_.gamma_index)] += dgamma_acc * gamma * (1.0 - gamma);
    }
    if (layout_.delta_index >= 0) {
      grad[static_cast<size_t>(layout_.delta_index)] += ddelta_acc * delta * (1.0 - delta);
    }
  }
  return ll;
}

double LogDensity::value_grad(std::span<const double> u, std::span<double> grad,
                              GradWorkspace& ws) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  for (double v : u) {
    if (!std::isfinite(v)) return kNegInf;
  }

  double lp = rows_ll_grad(u, grad, ws, true);
  if (!std::isfinite(lp)) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return kNegInf;
  }

  // Priors.
  lp += student_t_logpdf(u[0]);
  grad[0] += student_t_dlogpdf(u[0]);
  for (const auto& s : layout_.slopes) {
    lp += student_t_logpdf(u[static_cast<size_t>(s.index)]);
    grad[static_cast<size_t>(s.index)] += student_t_dlogpdf(u[static_cast<size_t>(s.index)]);
  }
  for (const auto& v : layout_.varying) {
    for (int l = 0; l < v.levels; ++l) {
      const size_t zi = static_cast<size_t>(v.z_offset + l);
      lp += -0.5 * u[zi] * u[zi];
      grad[zi] += -u[zi];
    }
    const size_t si = static_cast<size_t>(v.sigma_index);
    const double sigma = std::exp(u[si]);
    lp += student_t_logpdf(sigma) + u[si];  // half-t plus log|d sigma / d u|
    grad[si] += student_t_dlogpdf(sigma) * sigma + 1.0;
  }
  if (layout_.gamma_index >= 0) {
    const size_t gi = static_cast<size_t>(layout_.gamma_index);
    const double g = logistic(u[gi]);
    // beta(a, b) density plus logit Jacobian collapses to a*log(g) + b*log(1-g)
    lp += gamma_a_ * std::log(g) + gamma_b_ * std::log1p(-g);
    grad[gi] += gamma_a_ - (gamma_a_ + gamma_b_) * g;
  }
  if (layout_.delta_index >= 0) {
    const size_t di = static_cast<size_t>(layout_.delta_index);
    const double d = logistic(u[di]);
    lp += delta_a_ * std::log(d) + delta_b_ * std::log1p(-d);
    grad[di] += delta_a_ - (delta_a_ + delta_b_) * d;
  }
  return lp;
}

double LogDensity::value(std::span<const double> u, GradWorkspace& ws) const {
  std::vector<double> grad(static_cast<size_t>(layout_.n_params));
  return value_grad(u, grad, ws);
}

double LogDensity::log_likelihood(std::span<const double> theta) const {
  // Constrained scale: alpha enters directly, no sigma scaling.
  const size_t kv = static_cast<size_t>(data_.n_varying);
  const size_t ks = static_cast<size_t>(data_.n_slopes);
  const double delta =
      layout_.delta_index >= 0 ? theta[static_cast<size_t>(layout_.delta_index)] : fixed_delta_;
  const double gamma =
      layout_.gamma_index >= 0 ? theta[static_cast<size_t>(layout_.gamma_index)] : fixed_gamma_;
  const double c0 = 1.0 - gamma;
  const double c1 = delta + gamma - 1.0;
  double ll = 0.0;
  for (size_t r = 0; r < data_.n_rows; ++r) {
    double eta = theta[0];
    for (size_t s = 0; s < ks; ++s) {
      eta += theta[static_cast<size_t>(layout_.slopes[s].index)] * data_.slopes[r * ks + s];
    }
    for (size_t v = 0; v < layout_.varying.size(); ++v) {
      eta += theta[static_cast<size_t>(layout_.varying[v].z_offset) +
                   data_.levels[r * kv + v]];
    }
    const double pi = logistic(eta);
    const double pstar = c0 + c1 * pi;
    const double m = data_.trials[r];
    const double s_r = data_.successes[r];
    if (pstar <= 0.0) {
      if (s_r > 0.0) return kNegInf;
      continue;  // log(1 - 0) contributes nothing
    }
    if (pstar >= 1.0) {
      if (s_r < m) return kNegInf;
      continue;
    }
    const double pc = std::min(std::max(pstar, kProbFloor), 1.0 - kProbFloor);
    ll += s_r * std::log(pc) + (m - s_r) * std::log1p(-pc);
  }
  return ll;
}

void LogDensity::constrain(std::span<const double> u, std::span<double> theta) const {
  std::copy(u.begin(), u.end(), theta.begin());
  for (const auto& v : layout_.varying) {
    const double sigma = std::exp(u[static_cast<size_t>(v.sigma_index)]);
    theta[static_cast<size_t>(v.sigma_index)] = sigma;
    for (int l = 0; l < v.levels; ++l) {
      theta[static_cast<size_t>(v.z_offset + l)] = sigma * u[static_cast<size_t>(v.z_offset + l)];
    }
  }
  if (layout_.delta_index >= 0) {
    theta[static_cast<size_t>(layout_.delta_index)] =
        logistic(u[static_cast<size_t>(layout_.delta_index)]);
  }
  if (layout_.gamma_index >= 0) {
    theta[static_cast<size_t>(layout_.gamma_index)] =
        logistic(u[static_cast<size_t>(layout_.gamma_index)]);
  }
}

LogDensity make_log_density(const Sample& sample, const ModelSpec& spec,
                            const CovariateSchema& schema) {
  auto layout = ParamLayout::build(spec, schema);
  auto data = LikelihoodData::build(sample, spec, schema);
  return LogDensity(std::move(data), spec, std::move(layout));
}

}  // namespace prevmrp
