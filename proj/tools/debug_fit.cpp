// Scratch reproduction of a single condition/iteration fit with adjustable
// sampler settings; prints per-chain summaries for eyeballing adaptation
// problems. Not installed; developer aid only.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "prevmrp/cells.hpp"
#include "prevmrp/common.hpp"
#include "prevmrp/diagnostics.hpp"
#include "prevmrp/likelihood.hpp"
#include "prevmrp/metrics.hpp"
#include "prevmrp/nuts.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/poststrat.hpp"
#include "prevmrp/rng.hpp"

using namespace prevmrp;

int main(int argc, char** argv) {
  const int iteration = argc > 1 ? std::atoi(argv[1]) : 1;
  const int chains = argc > 2 ? std::atoi(argv[2]) : 2;
  const int warmup = argc > 3 ? std::atoi(argv[3]) : 500;
  const int samples = argc > 4 ? std::atoi(argv[4]) : 500;
  const double gamma_true = argc > 5 ? std::atof(argv[5]) : 0.98;
  const int model = argc > 6 ? std::atoi(argv[6]) : 5;

  PopulationConfig pc;
  pc.n_units = 100000;
  pc.levels = 20;
  pc.zeta1 = 0.3;
  pc.prevalence = 0.01;
  const SeedStream seeds{20260810};
  std::string pop_label = "pop|N=100000|K=5|L=20|pi=0.01|zeta1=0.3";
  pc.seed = seeds.derive(pop_label);
  const auto pop = generate_population(pc);
  std::printf("population mean pi %.5f mean y %.5f zeta0 %.4f\n", pop.mean_pi(), pop.mean_y(),
              pop.zeta0);

  ConditionKey key;
  key.experiment = "exp2_1";
  key.n = 4000;
  key.pi = 0.01;
  key.zeta1 = 0.3;
  key.levels = 20;
  key.gamma_true = gamma_true;
  key.delta_true = 1.0;
  const std::string group = key.group_label();
  auto sample = draw_sample(pop, 4000,
                            seeds.derive("sample|" + group + "|iter=" + std::to_string(iteration)));
  sample.y_star = corrupt_measurements(
      sample.y, 1.0, gamma_true,
      seeds.derive("corrupt|" + group + "|iter=" + std::to_string(iteration)));
  std::printf("sample positives %.0f of %zu (%.4f)\n",
              sample.mean_y_star() * static_cast<double>(sample.size()), sample.size(),
              sample.mean_y_star());

  const auto schema = pc.schema();
  const auto ladder =
      build_model_ladder(schema, LadderVariant::Basic, Measurement::known(1.0, gamma_true));
  const auto& spec = ladder[static_cast<size_t>(model)];
  const auto layout = ParamLayout::build(spec, schema);
  LogDensity density(LikelihoodData::build(sample, spec, schema), spec, layout);
  std::printf("model %d: %d params, %zu likelihood rows\n", model, layout.n_params,
              density.data().n_rows);

  McmcConfig mc;
  mc.chains = chains;
  mc.warmup = warmup;
  mc.samples = samples;
  uint64_t mstate = seeds.derive("mcmc|" + group + "|iter=" + std::to_string(iteration)) ^
                    hash_label("model=" + std::to_string(model));
  mc.seed = splitmix64(mstate);
  const auto draws = sample_posterior(density, mc);

  for (size_t c = 0; c < draws.n_chains; ++c) {
    const auto& st = draws.chain_stats[c];
    std::vector<double> b0;
    for (size_t i = 0; i < draws.n_samples; ++i) b0.push_back(draws.value(c, i, 0));
    std::printf(
        "chain %zu: step %.4f accept %.3f div %llu depth_hits %llu   beta0 med %.3f [%.3f, %.3f]\n",
        c, st.step_size, st.accept_mean, static_cast<unsigned long long>(st.divergences),
        static_cast<unsigned long long>(st.max_depth_hits), median_of(b0),
        quantile_type7(b0, 0.05), quantile_type7(b0, 0.95));
  }

  const auto pop_cells = bind_cells(cell_table(pop.rows, spec, schema, CountKind::PopulationN), layout);
  const auto smp_cells = bind_cells(cell_table(sample.rows, spec, schema, CountKind::SampleN), layout);
  const auto est = estimand_draws(draws, pop_cells, smp_cells, layout, spec.measurement);
  std::printf("pi_hat median %.5f  pi_s median %.5f\n", median_of(est.pi_pop),
              median_of(est.pi_sample));

  if (draws.n_chains >= 2 && draws.n_samples >= 100) {
    const auto diag = diagnose(draws);
    std::printf("max rhat %.4f  min ess %.1f  divergences %llu\n", diag.max_rhat(), diag.min_ess(),
                static_cast<unsigned long long>(draws.total_divergences()));
    for (size_t p = 0; p < draws.n_params; ++p) {
      if (diag.rhat[p] > 1.05) {
        std::printf("  rhat %.3f ess %7.1f  %s  median %.4f\n", diag.rhat[p], diag.ess_bulk[p],
                    draws.names[p].c_str(), draws_median(draws, p));
      }
    }
  }
  for (const auto& v : layout.varying) {
    std::printf("sigma_%s median %.4f\n",
                schema.covariate(v.covariate).name.c_str(),
                draws_median(draws, static_cast<size_t>(v.sigma_index)));
  }
  return 0;
}
