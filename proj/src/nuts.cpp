#include "prevmrp/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "prevmrp/common.hpp"
#include "prevmrp/diagnostics.hpp"
#include "prevmrp/rng.hpp"

namespace prevmrp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kDeltaMax = 1000.0;  // divergence threshold on the joint density

struct DualAverage {
  double mu = 0.0;
  double log_eps = 0.0;
  double log_eps_bar = 0.0;
  double h_bar = 0.0;
  double count = 1.0;
  double target = 0.8;

  static constexpr double kGammaDA = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;

  void restart(double epsilon) {
    mu = std::log(10.0 * epsilon);
    log_eps = std::log(epsilon);
    log_eps_bar = 0.0;
    h_bar = 0.0;
    count = 1.0;
  }

  void update(double accept) {
    const double prop = 1.0 / (count + kT0);
    h_bar = (1.0 - prop) * h_bar + prop * (target - accept);
    log_eps = mu - std::sqrt(count) / kGammaDA * h_bar;
    const double w = std::pow(count, -kKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    count += 1.0;
  }

  double epsilon() const { return std::exp(log_eps); }
  double epsilon_final() const { return std::exp(log_eps_bar); }
};

/// Warmup layout: fast buffer, doubling slow windows for the metric, fast
/// tail. Mirrors the usual three-stage schedule.
struct AdaptSchedule {
  size_t warmup = 0;
  size_t init_buffer = 75;
  size_t term_buffer = 50;
  size_t base_window = 25;
  bool adapt_metric = true;
  size_t next_window_end = 0;
  size_t window_size = 0;

  void configure(size_t warmup_iters) {
    warmup = warmup_iters;
    if (warmup < init_buffer + term_buffer + base_window) {
      init_buffer = std::max<size_t>(1, warmup * 15 / 100);
      term_buffer = std::max<size_t>(1, warmup * 10 / 100);
      if (init_buffer + term_buffer + 10 > warmup) {
        adapt_metric = false;
        return;
      }
      base_window = warmup - init_buffer - term_buffer;
    }
    window_size = base_window;
    next_window_end = init_buffer + window_size;
    clamp_last_window();
  }

  bool in_metric_window(size_t iter) const {
    return adapt_metric && iter >= init_buffer && iter < warmup - term_buffer;
  }

  bool window_closes(size_t iter) const {
    return adapt_metric && iter + 1 == next_window_end;
  }

  void advance() {
    window_size *= 2;
    next_window_end += window_size;
    clamp_last_window();
  }

 private:
  void clamp_last_window() {
    const size_t slow_end = warmup - term_buffer;
    // If the following window would not fit, extend this one to the end.
    if (next_window_end + 2 * window_size > slow_end) next_window_end = slow_end;
  }
};

struct Welford {
  size_t n = 0;
  std::vector<double> mean, m2;

  void reset(size_t dim) {
    n = 0;
    mean.assign(dim, 0.0);
    m2.assign(dim, 0.0);
  }

  void add(std::span<const double> x) {
    ++n;
    for (size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / static_cast<double>(n);
      m2[i] += d * (x[i] - mean[i]);
    }
  }

  /// Regularized variance estimate, shrunk toward a small diagonal.
  void variance(std::vector<double>& out) const {
    const double dn = static_cast<double>(n);
    for (size_t i = 0; i < out.size(); ++i) {
      const double var = n > 1 ? m2[i] / (dn - 1.0) : 1.0;
      out[i] = dn / (dn + 5.0) * var + 1e-3 * (5.0 / (dn + 5.0));
    }
  }
};

class NutsChain {
 public:
  NutsChain(const LogDensity& model, const McmcConfig& cfg, uint64_t seed)
      : model_(model), cfg_(cfg), rng_(seed), dim_(static_cast<size_t>(model.n_params())) {
    model_.prepare(ws_);
    inv_metric_.assign(dim_, 1.0);
    q_.resize(dim_);
    grad_.resize(dim_);
  }

  void initialize() {
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (auto& v : q_) v = rng_.uniform(-cfg_.init_range, cfg_.init_range);
      lp_ = model_.value_grad(q_, grad_, ws_);
      if (std::isfinite(lp_)) return;
    }
    throw DataError("could not find a starting point with finite log posterior");
  }

  void run(std::span<double> out_values, std::span<double> out_lp, ChainStats& stats) {
    initialize();
    const size_t warmup = static_cast<size_t>(cfg_.warmup);
    const size_t samples = static_cast<size_t>(cfg_.samples);

    schedule_.configure(warmup);
    da_.target = cfg_.target_accept;
    double epsilon = find_reasonable_epsilon();
    da_.restart(epsilon);
    welford_.reset(dim_);

    for (size_t it = 0; it < warmup; ++it) {
      const double accept = transition(epsilon, nullptr);
      da_.update(accept);
      epsilon = da_.epsilon();
      if (schedule_.in_metric_window(it)) {
        welford_.add(q_);
        if (schedule_.window_closes(it)) {
          welford_.variance(inv_metric_);
          welford_.reset(dim_);
          schedule_.advance();
          epsilon = find_reasonable_epsilon();
          da_.restart(epsilon);
        }
      }
    }
    epsilon = warmup > 0 ? da_.epsilon_final() : epsilon;

    stats = ChainStats{};
    stats.step_size = epsilon;
    std::vector<double> theta(dim_);
    double accept_sum = 0.0;
    for (size_t it = 0; it < samples; ++it) {
      accept_sum += transition(epsilon, &stats);
      model_.constrain(q_, theta);
      std::copy(theta.begin(), theta.end(), out_values.begin() + static_cast<ptrdiff_t>(it * dim_));
      out_lp[it] = lp_;
    }
    stats.accept_mean = samples > 0 ? accept_sum / static_cast<double>(samples) : 0.0;
  }

 private:
  struct Tree {
    std::vector<double> q_lo, r_lo, g_lo;  // backward edge
    std::vector<double> q_hi, r_hi, g_hi;  // forward edge
    std::vector<double> q_prop;
    double lp_prop = 0.0;
    std::vector<double> g_prop;
    double n = 0.0;
    bool valid = false;
    bool divergent = false;
    double alpha = 0.0;
    double n_alpha = 0.0;
  };

  double kinetic(const std::vector<double>& r) const {
    double k = 0.0;
    for (size_t i = 0; i < dim_; ++i) k += inv_metric_[i] * r[i] * r[i];
    return 0.5 * k;
  }

  void sample_momentum(std::vector<double>& r) {
    r.resize(dim_);
    for (size_t i = 0; i < dim_; ++i) r[i] = rng_.normal() / std::sqrt(inv_metric_[i]);
  }

  /// One leapfrog step in place; returns the new log posterior.
  double leapfrog(std::vector<double>& q, std::vector<double>& r, std::vector<double>& g,
                  double eps) {
    for (size_t i = 0; i < dim_; ++i) r[i] += 0.5 * eps * g[i];
    for (size_t i = 0; i < dim_; ++i) q[i] += eps * inv_metric_[i] * r[i];
    const double lp = model_.value_grad(q, g, ws_);
    for (size_t i = 0; i < dim_; ++i) r[i] += 0.5 * eps * g[i];
    return lp;
  }

  bool no_uturn(const std::vector<double>& q_lo, const std::vector<double>& r_lo,
                const std::vector<double>& q_hi, const std::vector<double>& r_hi) const {
    double fwd = 0.0, bwd = 0.0;
    for (size_t i = 0; i < dim_; ++i) {
      const double dq = q_hi[i] - q_lo[i];
      fwd += dq * inv_metric_[i] * r_hi[i];
      bwd += dq * inv_metric_[i] * r_lo[i];
    }
    return fwd >= 0.0 && bwd >= 0.0;
  }

  Tree build_tree(const std::vector<double>& q, const std::vector<double>& r,
                  const std::vector<double>& g, double log_u, int dir, int depth, double eps,
                  double joint0) {
    Tree t;
    if (depth == 0) {
      t.q_prop = q;
      t.r_lo = r;
      t.g_prop = g;
      const double lp = leapfrog(t.q_prop, t.r_lo, t.g_prop, dir * eps);
      const double joint = std::isfinite(lp) ? lp - kinetic(t.r_lo) : kNegInf;
      t.n = log_u <= joint ? 1.0 : 0.0;
      t.divergent = !(log_u < joint + kDeltaMax);
      t.valid = !t.divergent;
      const double diff = joint - joint0;
      t.alpha = diff >= 0.0 ? 1.0 : std::exp(diff);
      if (!std::isfinite(diff)) t.alpha = 0.0;
      t.n_alpha = 1.0;
      t.lp_prop = lp;
      t.q_lo = t.q_prop;
      t.g_lo = t.g_prop;
      t.q_hi = t.q_prop;
      t.r_hi = t.r_lo;
      t.g_hi = t.g_prop;
      return t;
    }

    t = build_tree(q, r, g, log_u, dir, depth - 1, eps, joint0);
    if (!t.valid) return t;

    Tree inner = dir > 0 ? build_tree(t.q_hi, t.r_hi, t.g_hi, log_u, dir, depth - 1, eps, joint0)
                         : build_tree(t.q_lo, t.r_lo, t.g_lo, log_u, dir, depth - 1, eps, joint0);
    if (dir > 0) {
      t.q_hi = std::move(inner.q_hi);
      t.r_hi = std::move(inner.r_hi);
      t.g_hi = std::move(inner.g_hi);
    } else {
      t.q_lo = std::move(inner.q_lo);
      t.r_lo = std::move(inner.r_lo);
      t.g_lo = std::move(inner.g_lo);
    }
    const double total = t.n + inner.n;
    if (total > 0.0 && rng_.uniform() <= inner.n / total) {
      t.q_prop = std::move(inner.q_prop);
      t.g_prop = std::move(inner.g_prop);
      t.lp_prop = inner.lp_prop;
    }
    t.n = total;
    t.alpha += inner.alpha;
    t.n_alpha += inner.n_alpha;
    t.divergent = t.divergent || inner.divergent;
    t.valid = inner.valid && !inner.divergent && no_uturn(t.q_lo, t.r_lo, t.q_hi, t.r_hi);
    return t;
  }

  /// One no-U-turn transition; returns the mean acceptance statistic.
  double transition(double eps, ChainStats* stats) {
    std::vector<double> r0;
    sample_momentum(r0);
    const double joint0 = lp_ - kinetic(r0);
    const double log_u = std::log(rng_.uniform_pos()) + joint0;

    std::vector<double> q_lo = q_, q_hi = q_;
    std::vector<double> r_lo = r0, r_hi = r0;
    std::vector<double> g_lo = grad_, g_hi = grad_;

    double n = 1.0;
    double alpha = 0.0, n_alpha = 0.0;
    bool divergent = false;
    int depth = 0;
    for (; depth < cfg_.max_depth; ++depth) {
      const int dir = (rng_.next_u64() & 1u) ? 1 : -1;
      Tree t = dir > 0 ? build_tree(q_hi, r_hi, g_hi, log_u, dir, depth, eps, joint0)
                       : build_tree(q_lo, r_lo, g_lo, log_u, dir, depth, eps, joint0);
      if (dir > 0) {
        q_hi = std::move(t.q_hi);
        r_hi = std::move(t.r_hi);
        g_hi = std::move(t.g_hi);
      } else {
        q_lo = std::move(t.q_lo);
        r_lo = std::move(t.r_lo);
        g_lo = std::move(t.g_lo);
      }
      alpha += t.alpha;
      n_alpha += t.n_alpha;
      divergent = divergent || t.divergent;
      if (t.valid && t.n > 0.0 && (t.n >= n || rng_.uniform() <= t.n / n)) {
        q_ = t.q_prop;
        grad_ = t.g_prop;
        lp_ = t.lp_prop;
      }
      n += t.n;
      if (!t.valid) break;
      if (!no_uturn(q_lo, r_lo, q_hi, r_hi)) break;
    }
    if (stats) {
      if (divergent) ++stats->divergences;
      if (depth == cfg_.max_depth) ++stats->max_depth_hits;
    }
    return n_alpha > 0.0 ? alpha / n_alpha : 0.0;
  }

  /// Doubling/halving search for a step size with acceptance near 1/2.
  double find_reasonable_epsilon() {
    double eps = 1.0;
    std::vector<double> r;
    sample_momentum(r);
    const double joint0 = lp_ - kinetic(r);
    auto joint_after = [&](double e) {
      std::vector<double> q = q_, rr = r, g = grad_;
      const double lp = leapfrog(q, rr, g, e);
      return std::isfinite(lp) ? lp - kinetic(rr) : kNegInf;
    };
    double diff = joint_after(eps) - joint0;
    if (!std::isfinite(diff)) diff = kNegInf;
    const double dir = diff > std::log(0.5) ? 1.0 : -1.0;
    for (int i = 0; i < 50; ++i) {
      eps *= dir > 0 ? 2.0 : 0.5;
      diff = joint_after(eps) - joint0;
      if (!std::isfinite(diff)) diff = kNegInf;
      if (dir > 0 ? diff <= std::log(0.5) : diff > std::log(0.5)) break;
      if (eps > 1e7 || eps < 1e-10) break;
    }
    return eps;
  }

  const LogDensity& model_;
  const McmcConfig& cfg_;
  Rng rng_;
  size_t dim_;
  GradWorkspace ws_;
  std::vector<double> q_, grad_;
  double lp_ = 0.0;
  std::vector<double> inv_metric_;
  DualAverage da_;
  AdaptSchedule schedule_;
  Welford welford_;
};

}  // namespace

void McmcConfig::validate() const {
  if (chains < 1) throw ConfigError("need at least one chain");
  if (warmup < 0 || samples < 1) throw ConfigError("invalid iteration counts");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw ConfigError("target acceptance must lie in (0, 1)");
  }
  if (max_depth < 1 || max_depth > 14) throw ConfigError("max tree depth out of range");
}

PosteriorDraws sample_posterior(const LogDensity& density, const McmcConfig& cfg) {
  cfg.validate();
  PosteriorDraws draws;
  draws.names = density.layout().names;
  draws.n_params = static_cast<size_t>(density.n_params());
  draws.n_chains = static_cast<size_t>(cfg.chains);
  draws.n_samples = static_cast<size_t>(cfg.samples);
  draws.values.assign(draws.total_draws() * draws.n_params, 0.0);
  draws.lp.assign(draws.total_draws(), 0.0);
  draws.chain_stats.assign(draws.n_chains, ChainStats{});

  // Chains have independent named streams: results do not depend on whether
  // they run here in parallel or inside an already-parallel task.
#pragma omp parallel for schedule(static)
  for (int c = 0; c < cfg.chains; ++c) {
    uint64_t chain_state = cfg.seed + 0x51ed2701a9e7a3d5ULL * static_cast<uint64_t>(c + 1);
    NutsChain chain(density, cfg, splitmix64(chain_state));
    const size_t offset = static_cast<size_t>(c) * draws.n_samples;
    chain.run({draws.values.data() + offset * draws.n_params, draws.n_samples * draws.n_params},
              {draws.lp.data() + offset, draws.n_samples},
              draws.chain_stats[static_cast<size_t>(c)]);
  }

  const double total = static_cast<double>(draws.total_draws());
  draws.divergence_warning = static_cast<double>(draws.total_divergences()) > 0.01 * total;
  if (cfg.chains >= 2 && cfg.samples >= 100) {
    const auto diag = diagnose(draws);
    draws.rhat_warning = diag.max_rhat() > 1.01;
  }
  return draws;
}

}  // namespace prevmrp
