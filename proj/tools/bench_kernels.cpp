// Times the data-parallel kernels against their single-thread runs and checks
// the results agree bit for bit. Run with OMP_NUM_THREADS set to taste.

#include <chrono>
#include <cstdio>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prevmrp/cells.hpp"
#include "prevmrp/likelihood.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/poststrat.hpp"
#include "prevmrp/rng.hpp"

using namespace prevmrp;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n);
#else
  (void)n;
#endif
}

template <typename F>
double time_best_of(int reps, F&& f) {
  double best = 1e18;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now_ms();
    f();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

}  // namespace

int main() {
  const int max_threads = threads();
  std::printf("kernel benchmark, serial vs %d threads\n\n", max_threads);

  // --- population generation --------------------------------------------
  PopulationConfig pc;
  pc.n_units = 500000;
  pc.levels = 20;
  pc.zeta1 = 0.3;
  pc.prevalence = 0.01;
  pc.seed = 7;

  set_threads(1);
  Population pop_serial;
  const double t_pop_serial = time_best_of(2, [&] { pop_serial = generate_population(pc); });
  set_threads(max_threads);
  Population pop_par;
  const double t_pop_par = time_best_of(2, [&] { pop_par = generate_population(pc); });
  const bool pop_same = pop_serial.y == pop_par.y && pop_serial.pi == pop_par.pi;
  std::printf("population  N=%llu: serial %8.1f ms   parallel %8.1f ms   speedup %.2fx   %s\n",
              static_cast<unsigned long long>(pc.n_units), t_pop_serial, t_pop_par,
              t_pop_serial / t_pop_par, pop_same ? "bit-identical" : "MISMATCH");

  // --- log-posterior gradient --------------------------------------------
  const CovariateSchema schema = pc.schema();
  const auto ladder = build_model_ladder(schema, LadderVariant::Basic, Measurement::none());
  const ModelSpec& spec = ladder[5];
  Sample sample = draw_sample(pop_par, 40000, 11);
  sample.y_star = corrupt_measurements(sample.y, 1.0, 1.0, 13);
  const ParamLayout layout = ParamLayout::build(spec, schema);
  LogDensity density(LikelihoodData::build(sample, spec, schema), spec, layout);

  Rng rng(17);
  std::vector<double> u(static_cast<size_t>(layout.n_params));
  for (auto& v : u) v = 0.1 * rng.normal();
  std::vector<double> grad_serial(u.size()), grad_par(u.size());
  GradWorkspace ws;
  density.prepare(ws);

  set_threads(1);
  const double t_grad_serial = time_best_of(5, [&] {
    for (int i = 0; i < 20; ++i) density.value_grad(u, grad_serial, ws);
  });
  set_threads(max_threads);
  const double t_grad_par = time_best_of(5, [&] {
    for (int i = 0; i < 20; ++i) density.value_grad(u, grad_par, ws);
  });
  std::printf("gradient  rows=%zu: serial %8.2f ms   parallel %8.2f ms   speedup %.2fx   %s\n",
              density.data().n_rows, t_grad_serial / 20.0, t_grad_par / 20.0,
              t_grad_serial / t_grad_par, grad_serial == grad_par ? "bit-identical" : "MISMATCH");

  // --- poststratification over draws ---------------------------------------
  const CellTable table = cell_table(pop_par.rows, spec, schema, CountKind::PopulationN);
  const BoundCells cells = bind_cells(table, layout);
  PosteriorDraws draws;
  draws.names = layout.names;
  draws.n_params = static_cast<size_t>(layout.n_params);
  draws.n_chains = 1;
  draws.n_samples = 200;
  draws.values.resize(draws.n_samples * draws.n_params);
  for (auto& v : draws.values) v = 0.05 * rng.normal();
  draws.lp.assign(draws.n_samples, 0.0);
  draws.chain_stats.assign(1, {});

  EstimandDraws est_serial, est_par;
  set_threads(1);
  const double t_ps_serial = time_best_of(2, [&] {
    est_serial = estimand_draws(draws, cells, cells, layout, spec.measurement);
  });
  set_threads(max_threads);
  const double t_ps_par = time_best_of(2, [&] {
    est_par = estimand_draws(draws, cells, cells, layout, spec.measurement);
  });
  std::printf("poststrat  cells=%zu draws=%zu: serial %8.1f ms   parallel %8.1f ms   speedup "
              "%.2fx   %s\n",
              cells.n_cells, draws.n_samples, t_ps_serial, t_ps_par, t_ps_serial / t_ps_par,
              est_serial.pi_pop == est_par.pi_pop ? "bit-identical" : "MISMATCH");
  return 0;
}
