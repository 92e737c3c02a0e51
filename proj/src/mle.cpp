#include "prevmrp/mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prevmrp/common.hpp"

namespace prevmrp {

namespace {

/// Solve A x = b for a small symmetric positive-definite A (in-place
/// Cholesky). Returns false if the factorization breaks down.
bool solve_spd(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[static_cast<size_t>(j * n + j)];
    for (int k = 0; k < j; ++k) d -= a[static_cast<size_t>(j * n + k)] * a[static_cast<size_t>(j * n + k)];
    if (d <= 0.0 || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    a[static_cast<size_t>(j * n + j)] = l;
    for (int i = j + 1; i < n; ++i) {
      double s = a[static_cast<size_t>(i * n + j)];
      for (int k = 0; k < j; ++k) s -= a[static_cast<size_t>(i * n + k)] * a[static_cast<size_t>(j * n + k)];
      a[static_cast<size_t>(i * n + j)] = s / l;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = 0; k < i; ++k) s -= a[static_cast<size_t>(i * n + k)] * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / a[static_cast<size_t>(i * n + i)];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[static_cast<size_t>(i)];
    for (int k = i + 1; k < n; ++k) s -= a[static_cast<size_t>(k * n + i)] * b[static_cast<size_t>(k)];
    b[static_cast<size_t>(i)] = s / a[static_cast<size_t>(i * n + i)];
  }
  return true;
}

}  // namespace

double MleFit::prevalence_at_intercept() const {
  const double b0 = intercept();
  if (std::isinf(b0)) return b0 > 0 ? 1.0 : 0.0;
  return logistic(b0);
}

MleFit fit_mle_logistic(const Sample& sample, const ModelSpec& spec,
                        const CovariateSchema& schema) {
  if (spec.measurement.kind != MeasurementKind::None) {
    throw SchemaError("maximum likelihood fit supports no measurement layer");
  }
  if (spec.n_varying() > 0) {
    throw SchemaError("maximum likelihood fit supports fixed-effect terms only");
  }
  const LikelihoodData data = LikelihoodData::build(sample, spec, schema);
  const int p = 1 + data.n_slopes;
  const size_t ks = static_cast<size_t>(data.n_slopes);

  MleFit fit;
  fit.beta.assign(static_cast<size_t>(p), 0.0);

  // Degenerate outcome: the intercept walks off to the boundary.
  const double total = data.total_trials();
  const double pos = data.total_successes();
  if (pos == 0.0 || pos == total) {
    fit.status = MleStatus::Separated;
    fit.beta[0] = pos == 0.0 ? -std::numeric_limits<double>::infinity()
                             : std::numeric_limits<double>::infinity();
    return fit;
  }

  std::vector<double> xtx(static_cast<size_t>(p * p));
  std::vector<double> score(static_cast<size_t>(p));
  std::vector<double> row(static_cast<size_t>(p));
  constexpr double kTol = 1e-8;
  constexpr int kMaxIter = 100;

  for (int iter = 1; iter <= kMaxIter; ++iter) {
    std::fill(xtx.begin(), xtx.end(), 0.0);
    std::fill(score.begin(), score.end(), 0.0);
    for (size_t r = 0; r < data.n_rows; ++r) {
      row[0] = 1.0;
      for (size_t s = 0; s < ks; ++s) row[s + 1] = data.slopes[r * ks + s];
      double eta = 0.0;
      for (int j = 0; j < p; ++j) eta += fit.beta[static_cast<size_t>(j)] * row[static_cast<size_t>(j)];
      const double mu = logistic(eta);
      const double w = data.trials[r] * mu * (1.0 - mu);
      const double resid = data.successes[r] - data.trials[r] * mu;
      for (int j = 0; j < p; ++j) {
        score[static_cast<size_t>(j)] += resid * row[static_cast<size_t>(j)];
        for (int k = 0; k <= j; ++k) {
          xtx[static_cast<size_t>(j * p + k)] += w * row[static_cast<size_t>(j)] * row[static_cast<size_t>(k)];
        }
      }
    }
    for (int j = 0; j < p; ++j) {
      for (int k = j + 1; k < p; ++k) {
        xtx[static_cast<size_t>(j * p + k)] = xtx[static_cast<size_t>(k * p + j)];
      }
    }

    fit.iterations = iter;
    fit.max_abs_score = 0.0;
    for (double s : score) fit.max_abs_score = std::max(fit.max_abs_score, std::abs(s));
    if (fit.max_abs_score < kTol) {
      fit.status = MleStatus::Converged;
      return fit;
    }

    std::vector<double> step = score;
    if (!solve_spd(xtx, step, p)) {
      fit.status = MleStatus::Separated;
      return fit;
    }
    for (int j = 0; j < p; ++j) fit.beta[static_cast<size_t>(j)] += step[static_cast<size_t>(j)];

    // Coefficients running away faster than the score shrinks: separation.
    double max_beta = 0.0;
    for (double b : fit.beta) max_beta = std::max(max_beta, std::abs(b));
    if (max_beta > 30.0) {
      fit.status = MleStatus::Separated;
      return fit;
    }
  }
  fit.status = MleStatus::NonConverged;
  return fit;
}

}  // namespace prevmrp
