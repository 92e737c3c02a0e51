#include "prevmrp/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "prevmrp/common.hpp"
#include "prevmrp/csv.hpp"
#include "prevmrp/diagnostics.hpp"
#include "prevmrp/mle.hpp"
#include "prevmrp/poststrat.hpp"
#include "prevmrp/rng.hpp"

namespace fs = std::filesystem;

namespace prevmrp {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

const char* kResultsHeader =
    "experiment,ladder,model,method,n,pi,zeta1,levels,gamma_true,m_gamma,delta_true,iteration,"
    "pi_hat_median,pi_hat_mean,pi_s_median,pi_s_mean,beta0_median,pr_ystar_median,gamma_median,"
    "delta_median,sample_test_prev,true_pi,true_beta0,bias_pi,bias_beta0,delta_pi,divergences,"
    "max_rhat,min_ess,warn_divergence,warn_rhat,mle_status";

std::string result_row(const IterationResult& r) {
  const MetricValues m = compute_metrics(r);
  std::string s;
  s.reserve(320);
  auto add = [&](const std::string& field) {
    if (!s.empty()) s += ',';
    s += field;
  };
  add(r.key.experiment);
  add(r.key.ladder);
  add(std::to_string(r.key.model));
  add(r.key.method);
  add(std::to_string(r.key.n));
  add(format_double(r.key.pi));
  add(format_double(r.key.zeta1));
  add(std::to_string(r.key.levels));
  add(format_double(r.key.gamma_true));
  add(std::to_string(r.key.m_gamma));
  add(format_double(r.key.delta_true));
  add(std::to_string(r.iteration));
  add(format_double(r.pi_hat_median));
  add(format_double(r.pi_hat_mean));
  add(format_double(r.pi_s_median));
  add(format_double(r.pi_s_mean));
  add(format_double(r.beta0_median));
  add(format_double(r.pr_ystar_median));
  add(format_double(r.gamma_median));
  add(format_double(r.delta_median));
  add(format_double(r.sample_test_prev));
  add(r.has_truth ? format_double(r.true_pi) : "nan");
  add(r.has_truth ? format_double(r.true_beta0) : "nan");
  add(m.available ? format_double(m.bias_pi) : "nan");
  add(m.available ? format_double(m.bias_beta0) : "nan");
  add(m.available ? format_double(m.delta_pi) : "nan");
  add(std::to_string(r.divergences));
  add(format_double(r.max_rhat));
  add(format_double(r.min_ess));
  add(r.warn_divergence ? "1" : "0");
  add(r.warn_rhat ? "1" : "0");
  add(r.mle_status);
  return s;
}

double parse_double(const std::string& s) {
  if (s == "nan" || s.empty()) return kNan;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::stod(s);
}

/// One fully resolved simulation condition.
struct Condition {
  ConditionKey group;  // model/method fields left at defaults
  PopulationConfig pop_config;
  Measurement measurement;
  std::vector<std::string> methods;
  CalibrationData calibration;
};

std::string population_label(const PopulationConfig& p) {
  std::string s = "pop";
  s += "|N=" + std::to_string(p.n_units);
  s += "|K=" + std::to_string(p.n_covariates);
  s += "|L=" + std::to_string(p.levels);
  s += "|pi=" + format_double(p.prevalence);
  s += "|zeta1=" + format_double(p.zeta1);
  return s;
}

std::vector<Condition> enumerate_conditions(const ExperimentConfig& cfg) {
  const SeedStream seeds{cfg.master_seed};
  std::vector<Condition> out;

  const bool measures = cfg.experiment == ExperimentId::Exp2_1 ||
                        cfg.experiment == ExperimentId::Exp2_2 ||
                        cfg.experiment == ExperimentId::Exp3 ||
                        cfg.experiment == ExperimentId::Feedback;
  const bool estimates = cfg.experiment == ExperimentId::Exp2_2 ||
                         cfg.experiment == ExperimentId::Exp3 ||
                         cfg.experiment == ExperimentId::Feedback;

  const std::vector<double> gammas = measures ? cfg.gamma_values : std::vector<double>{1.0};
  const std::vector<int64_t> m_gammas = estimates ? cfg.m_gamma_values : std::vector<int64_t>{0};

  for (uint64_t n : cfg.n_values) {
    for (double pi : cfg.pi_values) {
      for (double zeta1 : cfg.zeta1_values) {
        for (int levels : cfg.level_values) {
          for (double gamma : gammas) {
            for (int64_t m_gamma : m_gammas) {
              Condition c;
              c.group.experiment = to_string(cfg.experiment);
              c.group.ladder = to_string(cfg.ladder);
              c.group.n = n;
              c.group.pi = pi;
              c.group.zeta1 = zeta1;
              c.group.levels = levels;
              c.group.gamma_true = measures ? gamma : 1.0;
              c.group.m_gamma = m_gamma;
              c.group.delta_true = measures ? cfg.delta_true : 1.0;
              c.pop_config.n_units = cfg.population_size;
              c.pop_config.n_covariates = cfg.n_covariates;
              c.pop_config.levels = levels;
              c.pop_config.zeta1 = zeta1;
              c.pop_config.prevalence = pi;
              c.pop_config.seed = seeds.derive(population_label(c.pop_config));
              c.methods = cfg.experiment == ExperimentId::Exp1_1
                              ? std::vector<std::string>{"mle", "bayes"}
                              : std::vector<std::string>{"bayes"};
              if (!measures) {
                c.measurement = Measurement::none();
              } else if (!estimates) {
                c.measurement = Measurement::known(cfg.delta_true, gamma);
              } else {
                const auto sc = calibration_counts(gamma, m_gamma);
                c.calibration.tn = sc.tn;
                c.calibration.fp = sc.fp;
                if (cfg.estimate_both) {
                  const auto dc = sensitivity_calibration_counts(cfg.delta_true, cfg.m_delta);
                  c.calibration.tp = dc.tp;
                  c.calibration.fn = dc.fn;
                  c.measurement = Measurement::estimated_both(c.calibration);
                } else {
                  c.measurement =
                      Measurement::estimated_specificity(c.calibration, cfg.delta_true);
                }
              }
              out.push_back(std::move(c));
            }
          }
        }
      }
    }
  }
  return out;
}

RunManifest plan(const ExperimentConfig& cfg, const std::vector<Condition>& conditions) {
  const SeedStream seeds{cfg.master_seed};
  RunManifest m;
  m.config = cfg;
  m.config_hash = cfg.config_hash();
  uint64_t index = 0;
  for (const auto& c : conditions) {
    const std::string group = c.group.group_label();
    for (int it = 0; it < cfg.iterations; ++it) {
      TaskEntry t;
      t.index = index++;
      t.condition = c.group;
      t.iteration = it;
      t.seeds.population = c.pop_config.seed;
      t.seeds.sample = seeds.derive("sample|" + group + "|iter=" + std::to_string(it));
      t.seeds.corrupt = seeds.derive("corrupt|" + group + "|iter=" + std::to_string(it));
      t.seeds.mcmc_base = seeds.derive("mcmc|" + group + "|iter=" + std::to_string(it));
      t.calibration = c.calibration;
      m.tasks.push_back(std::move(t));
    }
  }
  return m;
}

/// Per-condition immutable fitting context shared by its tasks.
struct ConditionContext {
  const Condition* condition = nullptr;
  const Population* population = nullptr;
  CovariateSchema schema;
  std::vector<ModelSpec> ladder;
  std::vector<int> models;
  std::vector<ParamLayout> layouts;      // aligned with models
  std::vector<BoundCells> pop_cells;     // aligned with models
};

IterationResult bayes_row(const ConditionContext& ctx, size_t mi, const Sample& sample,
                          const TaskEntry& task, const ExperimentConfig& cfg,
                          const std::string& draws_path) {
  const int model = ctx.models[mi];
  const ModelSpec& spec = ctx.ladder[static_cast<size_t>(model)];
  const ParamLayout& layout = ctx.layouts[mi];

  LogDensity density(LikelihoodData::build(sample, spec, ctx.schema), spec, layout);
  McmcConfig mcmc = cfg.mcmc;
  uint64_t mstate = task.seeds.mcmc_base ^ hash_label("model=" + std::to_string(model));
  mcmc.seed = splitmix64(mstate);
  PosteriorDraws draws = sample_posterior(density, mcmc);

  const CellTable sample_table = cell_table(sample.rows, spec, ctx.schema, CountKind::SampleN);
  const BoundCells sample_cells = bind_cells(sample_table, layout);
  const EstimandDraws est =
      estimand_draws(draws, ctx.pop_cells[mi], sample_cells, layout, spec.measurement);

  IterationResult r;
  r.key = ctx.condition->group;
  r.key.model = model;
  r.key.method = "bayes";
  r.iteration = task.iteration;
  r.pi_hat_median = median_of(est.pi_pop);
  {
    double acc = 0.0;
    for (double v : est.pi_pop) acc += v;
    r.pi_hat_mean = acc / static_cast<double>(est.pi_pop.size());
  }
  r.pi_s_median = median_of(est.pi_sample);
  {
    double acc = 0.0;
    for (double v : est.pi_sample) acc += v;
    r.pi_s_mean = acc / static_cast<double>(est.pi_sample.size());
  }
  r.pr_ystar_median = median_of(est.pr_ystar);
  r.beta0_median = draws_median(draws, 0);
  const int gi = layout.gamma_index;
  const int di = layout.delta_index;
  r.gamma_median = gi >= 0 ? draws_median(draws, static_cast<size_t>(gi)) : kNan;
  r.delta_median = di >= 0 ? draws_median(draws, static_cast<size_t>(di)) : kNan;
  r.sample_test_prev = sample.mean_y_star();
  r.true_pi = ctx.condition->group.pi;
  r.true_beta0 = ctx.population->zeta0;
  r.divergences = draws.total_divergences();
  r.warn_divergence = draws.divergence_warning;
  r.warn_rhat = draws.rhat_warning;
  if (draws.n_chains >= 2 && draws.n_samples >= 100) {
    const Diagnostics diag = diagnose(draws);
    r.max_rhat = diag.max_rhat();
    r.min_ess = diag.min_ess();
  } else {
    r.max_rhat = kNan;
    r.min_ess = kNan;
  }

  if (!draws_path.empty()) {
    draws.write_csv(draws_path, {"pi_hat", "pi_s_hat", "pr_ystar"},
                    {est.pi_pop, est.pi_sample, est.pr_ystar});
  }
  return r;
}

IterationResult mle_row(const ConditionContext& ctx, size_t mi, const Sample& sample,
                        const TaskEntry& task) {
  const int model = ctx.models[mi];
  ModelSpec spec = ctx.ladder[static_cast<size_t>(model)];
  spec.measurement = Measurement::none();
  const MleFit fit = fit_mle_logistic(sample, spec, ctx.schema);

  IterationResult r;
  r.key = ctx.condition->group;
  r.key.model = model;
  r.key.method = "mle";
  r.iteration = task.iteration;
  r.pi_hat_median = fit.prevalence_at_intercept();
  r.pi_hat_mean = r.pi_hat_median;
  r.pi_s_median = r.pi_hat_median;
  r.pi_s_mean = r.pi_hat_median;
  r.beta0_median = fit.intercept();
  r.pr_ystar_median = r.pi_hat_median;
  r.gamma_median = kNan;
  r.delta_median = kNan;
  r.sample_test_prev = sample.mean_y_star();
  r.true_pi = ctx.condition->group.pi;
  r.true_beta0 = ctx.population->zeta0;
  r.max_rhat = kNan;
  r.min_ess = kNan;
  switch (fit.status) {
    case MleStatus::Converged:
      r.mle_status = "converged";
      break;
    case MleStatus::NonConverged:
      r.mle_status = "non_converged";
      break;
    case MleStatus::Separated:
      r.mle_status = "separated";
      break;
  }
  return r;
}

void run_task(const ConditionContext& ctx, const TaskEntry& task, const ExperimentConfig& cfg,
              const std::string& out_dir) {
  const auto& cond = *ctx.condition;
  Sample sample = draw_sample(*ctx.population, cond.group.n, task.seeds.sample);
  sample.y_star = corrupt_measurements(sample.y, cond.group.delta_true, cond.group.gamma_true,
                                       task.seeds.corrupt);

  std::vector<IterationResult> rows;
  for (size_t mi = 0; mi < ctx.models.size(); ++mi) {
    for (const auto& method : cond.methods) {
      if (method == "mle") {
        rows.push_back(mle_row(ctx, mi, sample, task));
      } else {
        std::string draws_path;
        if (cfg.save_draws) {
          draws_path = out_dir + "/draws/task_" + std::to_string(task.index) + "_model" +
                       std::to_string(ctx.models[mi]) + ".csv";
        }
        rows.push_back(bayes_row(ctx, mi, sample, task, cfg, draws_path));
      }
    }
  }

  const std::string path = out_dir + "/tasks/" + task.file_name();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write task shard '" + path + "'");
    for (const auto& r : rows) out << result_row(r) << "\n";
    if (!out) throw IoError("short write on task shard '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot move task shard into place at '" + path + "'");
  }
}

void stitch_results(const std::string& out_dir, const RunManifest& manifest) {
  const std::string path = out_dir + "/results.csv";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << kResultsHeader << "\n";
    for (const auto& t : manifest.tasks) {
      std::ifstream shard(out_dir + "/tasks/" + t.file_name(), std::ios::binary);
      if (!shard) throw IoError("missing task shard " + t.file_name());
      out << shard.rdbuf();
      if (!out) throw IoError("short write on '" + path + "'");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot move results into place at '" + path + "'");
  }
}

RunOutcome execute(const ExperimentConfig& cfg, bool resume) {
  auto errors = cfg.validate();
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }

  const std::string out_dir = cfg.output_dir;
  fs::create_directories(out_dir + "/tasks");
  if (cfg.save_draws) fs::create_directories(out_dir + "/draws");

  const std::vector<Condition> conditions = enumerate_conditions(cfg);
  RunManifest manifest = plan(cfg, conditions);

  RunOutcome outcome;
  outcome.output_dir = out_dir;
  outcome.results_csv = out_dir + "/results.csv";
  outcome.manifest_path = out_dir + "/manifest.json";
  outcome.tasks_total = manifest.tasks.size();

  for (auto& t : manifest.tasks) {
    t.done = resume && fs::exists(out_dir + "/tasks/" + t.file_name());
  }
  manifest.write(outcome.manifest_path);

  const int workers = cfg.resolve_workers();
  std::atomic<uint64_t> budget{cfg.max_tasks == 0 ? UINT64_MAX : cfg.max_tasks};
  std::atomic<size_t> ran{0};

  size_t task_cursor = 0;
  for (const auto& cond : conditions) {
    const size_t first = task_cursor;
    task_cursor += static_cast<size_t>(cfg.iterations);

    bool any_pending = false;
    for (size_t i = first; i < task_cursor; ++i) {
      if (!manifest.tasks[i].done) any_pending = true;
    }
    if (!any_pending || budget.load() == 0) continue;

    // Build the condition context once; tasks share it read-only.
    Population population = generate_population(cond.pop_config);
    if (cfg.save_population) {
      const std::string pop_path =
          out_dir + "/population_" + std::to_string(hash_label(population_label(cond.pop_config))) +
          ".csv";
      if (!fs::exists(pop_path)) write_population_csv(pop_path, population);
    }
    ConditionContext ctx;
    ctx.condition = &cond;
    ctx.population = &population;
    ctx.schema = cond.pop_config.schema();
    ctx.ladder = build_model_ladder(ctx.schema, cfg.ladder, cond.measurement);
    ctx.models = cfg.models;
    std::sort(ctx.models.begin(), ctx.models.end());
    for (int m : ctx.models) {
      const ModelSpec& spec = ctx.ladder[static_cast<size_t>(m)];
      ctx.layouts.push_back(ParamLayout::build(spec, ctx.schema));
      ctx.pop_cells.push_back(bind_cells(
          cell_table(population.rows, spec, ctx.schema, CountKind::PopulationN),
          ctx.layouts.back()));
    }

    std::exception_ptr failure;
    std::atomic<bool> failed{false};
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (int64_t i = static_cast<int64_t>(first); i < static_cast<int64_t>(task_cursor); ++i) {
      const TaskEntry& task = manifest.tasks[static_cast<size_t>(i)];
      if (task.done || failed.load()) continue;
      // Budget gate (used to exercise crash/resume): claim one slot or skip.
      uint64_t b = budget.load();
      bool claimed = false;
      while (b > 0 && !(claimed = budget.compare_exchange_weak(b, b - 1))) {
      }
      if (!claimed) continue;
      try {
        run_task(ctx, task, cfg, out_dir);
        ++ran;
#pragma omp critical(prevmrp_taskdone)
        manifest.tasks[static_cast<size_t>(i)].done = true;
      } catch (...) {
#pragma omp critical(prevmrp_taskfail)
        {
          if (!failure) failure = std::current_exception();
          failed.store(true);
        }
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  outcome.tasks_run = ran.load();
  outcome.complete = true;
  for (const auto& t : manifest.tasks) {
    if (!fs::exists(out_dir + "/tasks/" + t.file_name())) outcome.complete = false;
  }
  outcome.tasks_skipped = outcome.tasks_total - outcome.tasks_run;
  manifest.write(outcome.manifest_path);

  if (outcome.complete) {
    stitch_results(out_dir, manifest);
    write_summary(out_dir);
  }
  return outcome;
}

}  // namespace

namespace {

/// External-data mode: the same pipeline on an ingested sample and
/// poststratification table, minus the truth-dependent metrics.
RunOutcome run_real_data(const ExperimentConfig& cfg) {
  auto errors = cfg.validate();
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
  const std::string out_dir = cfg.output_dir;
  fs::create_directories(out_dir + "/tasks");

  const CovariateSchema schema{cfg.real_data.covariates};
  const Measurement meas = cfg.real_data.build_measurement();
  const auto ladder = build_model_ladder(schema, cfg.ladder, meas);
  std::vector<int> models = cfg.models;
  std::sort(models.begin(), models.end());

  // Sample file: y_star plus level_<name> (always), x_<name> / bin_<name>
  // where slope terms need them.
  const CsvFile sample_csv = read_csv(cfg.real_data.sample_csv);
  const int y_col = sample_csv.column("y_star");
  if (y_col < 0) throw DataError("sample file needs a y_star column");
  Sample sample;
  const int k = schema.size();
  sample.rows.resize(k, sample_csv.rows.size());
  sample.y_star.resize(sample_csv.rows.size());
  for (int c = 0; c < k; ++c) {
    const auto& cov = schema.covariate(c);
    const int lev_col = sample_csv.column("level_" + cov.name);
    if (lev_col < 0) throw DataError("sample file needs column level_" + cov.name);
    const int x_col = sample_csv.column("x_" + cov.name);
    const int bin_col = sample_csv.column("bin_" + cov.name);
    for (size_t i = 0; i < sample_csv.rows.size(); ++i) {
      const auto& row = sample_csv.rows[i];
      const int level = std::stoi(row[static_cast<size_t>(lev_col)]);
      if (level < 0 || level >= cov.levels) {
        throw DataError("sample row " + std::to_string(i) + ": level outside 0.." +
                        std::to_string(cov.levels - 1) + " for " + cov.name);
      }
      sample.rows.level[static_cast<size_t>(c)][i] = static_cast<uint16_t>(level);
      if (x_col >= 0) sample.rows.x[static_cast<size_t>(c)][i] = parse_double(row[static_cast<size_t>(x_col)]);
      if (bin_col >= 0) {
        sample.rows.bin[static_cast<size_t>(c)][i] =
            static_cast<uint8_t>(std::stoi(row[static_cast<size_t>(bin_col)]));
      }
    }
  }
  for (size_t i = 0; i < sample_csv.rows.size(); ++i) {
    sample.y_star[i] = sample_csv.rows[i][static_cast<size_t>(y_col)] == "1" ? 1 : 0;
  }

  // Poststratification file: count plus level_<name> for every covariate and
  // mean_x_<name> / mean_bin_<name> for slope terms; regrouped per model.
  const CsvFile cells_csv = read_csv(cfg.real_data.cells_csv);
  const int count_col = cells_csv.column("count");
  if (count_col < 0) throw DataError("cells file needs a count column");

  auto regroup = [&](const ModelSpec& spec) {
    CellTable table;
    table.kind = CountKind::PopulationN;
    std::vector<int> level_cols;
    std::vector<int> mean_cols;
    for (const auto& t : spec.terms) {
      const auto& cov = schema.covariate(t.covariate);
      if (t.has_varying()) {
        table.varying_covariates.push_back(t.covariate);
        const int col = cells_csv.column("level_" + cov.name);
        if (col < 0) throw DataError("cells file needs column level_" + cov.name);
        level_cols.push_back(col);
      }
      if (t.has_slope()) {
        table.slope_terms.push_back(t);
        const std::string col_name = t.slope_source == SlopeSource::Continuous
                                         ? "mean_x_" + cov.name
                                         : "mean_bin_" + cov.name;
        const int col = cells_csv.column(col_name);
        if (col < 0) throw DataError("cells file needs column " + col_name);
        mean_cols.push_back(col);
      }
    }
    const size_t kv = table.varying_covariates.size();
    const size_t ks = table.slope_terms.size();
    std::map<std::vector<uint16_t>, std::pair<uint64_t, std::vector<double>>> groups;
    for (const auto& row : cells_csv.rows) {
      std::vector<uint16_t> key(kv);
      for (size_t c = 0; c < kv; ++c) {
        const int level = std::stoi(row[static_cast<size_t>(level_cols[c])]);
        const auto& cov = schema.covariate(table.varying_covariates[c]);
        if (level < 0 || level >= cov.levels) {
          throw DataError("cells file: level outside the schema for " + cov.name);
        }
        key[c] = static_cast<uint16_t>(level);
      }
      const uint64_t count = std::stoull(row[static_cast<size_t>(count_col)]);
      auto& slot = groups[key];
      slot.second.resize(ks, 0.0);
      slot.first += count;
      for (size_t s = 0; s < ks; ++s) {
        slot.second[s] += static_cast<double>(count) *
                          parse_double(row[static_cast<size_t>(mean_cols[s])]);
      }
    }
    for (const auto& [key, slot] : groups) {
      if (slot.first == 0) continue;
      table.levels.insert(table.levels.end(), key.begin(), key.end());
      table.counts.push_back(slot.first);
      for (size_t s = 0; s < ks; ++s) {
        table.slope_means.push_back(slot.second[s] / static_cast<double>(slot.first));
      }
    }
    table.n_cells = table.counts.size();
    if (table.n_cells == 0) throw DataError("cells file has no usable rows");
    return table;
  };

  const SeedStream seeds{cfg.master_seed};
  std::vector<IterationResult> rows;
  for (int m : models) {
    const ModelSpec& spec = ladder[static_cast<size_t>(m)];
    const ParamLayout layout = ParamLayout::build(spec, schema);
    LogDensity density(LikelihoodData::build(sample, spec, schema), spec, layout);
    McmcConfig mcmc = cfg.mcmc;
    mcmc.seed = seeds.derive("mcmc|real_data|model=" + std::to_string(m));
    const PosteriorDraws draws = sample_posterior(density, mcmc);
    const BoundCells pop_cells = bind_cells(regroup(spec), layout);
    const BoundCells sample_cells =
        bind_cells(cell_table(sample.rows, spec, schema, CountKind::SampleN), layout);
    const EstimandDraws est = estimand_draws(draws, pop_cells, sample_cells, layout, meas);

    IterationResult r;
    r.key.experiment = "real_data";
    r.key.ladder = to_string(cfg.ladder);
    r.key.model = m;
    r.key.n = sample.size();
    r.key.levels = schema.covariate(0).levels;
    r.iteration = 0;
    r.has_truth = false;
    r.pi_hat_median = median_of(est.pi_pop);
    double acc = 0.0;
    for (double v : est.pi_pop) acc += v;
    r.pi_hat_mean = acc / static_cast<double>(est.pi_pop.size());
    r.pi_s_median = median_of(est.pi_sample);
    acc = 0.0;
    for (double v : est.pi_sample) acc += v;
    r.pi_s_mean = acc / static_cast<double>(est.pi_sample.size());
    r.pr_ystar_median = median_of(est.pr_ystar);
    r.beta0_median = draws_median(draws, 0);
    r.gamma_median = layout.gamma_index >= 0
                         ? draws_median(draws, static_cast<size_t>(layout.gamma_index))
                         : kNan;
    r.delta_median = layout.delta_index >= 0
                         ? draws_median(draws, static_cast<size_t>(layout.delta_index))
                         : kNan;
    r.sample_test_prev = sample.mean_y_star();
    r.true_pi = kNan;
    r.true_beta0 = kNan;
    r.divergences = draws.total_divergences();
    r.warn_divergence = draws.divergence_warning;
    r.warn_rhat = draws.rhat_warning;
    if (draws.n_chains >= 2 && draws.n_samples >= 100) {
      const Diagnostics diag = diagnose(draws);
      r.max_rhat = diag.max_rhat();
      r.min_ess = diag.min_ess();
    } else {
      r.max_rhat = kNan;
      r.min_ess = kNan;
    }
    rows.push_back(std::move(r));
  }

  RunOutcome outcome;
  outcome.output_dir = out_dir;
  outcome.results_csv = out_dir + "/results.csv";
  outcome.manifest_path = out_dir + "/manifest.json";
  outcome.tasks_total = 1;
  outcome.tasks_run = 1;
  outcome.complete = true;
  {
    std::ofstream shard(out_dir + "/tasks/task_000000.csv", std::ios::binary);
    for (const auto& r : rows) shard << result_row(r) << "\n";
  }
  {
    std::ofstream out(outcome.results_csv, std::ios::binary);
    if (!out) throw IoError("cannot write results.csv");
    out << kResultsHeader << "\n";
    for (const auto& r : rows) out << result_row(r) << "\n";
  }
  RunManifest manifest;
  manifest.config = cfg;
  manifest.config_hash = cfg.config_hash();
  TaskEntry t;
  t.index = 0;
  t.done = true;
  manifest.tasks.push_back(t);
  manifest.write(outcome.manifest_path);
  write_summary(out_dir);
  return outcome;
}

}  // namespace

RunOutcome run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == ExperimentId::Feedback) {
    throw ConfigError("use run_feedback_analysis for the feedback experiment");
  }
  if (cfg.experiment == ExperimentId::RealData) {
    return run_real_data(cfg);
  }
  return execute(cfg, /*resume=*/false);
}

RunOutcome resume_run(const std::string& manifest_path) {
  const RunManifest m = RunManifest::read(manifest_path);
  ExperimentConfig cfg = m.config;
  cfg.max_tasks = 0;  // a resume always finishes the grid
  return execute(cfg, /*resume=*/true);
}

std::vector<IterationResult> read_results_csv(const std::string& path) {
  const CsvFile csv = read_csv(path);
  if (csv.header.empty()) throw IoError("empty results file '" + path + "'");
  std::map<std::string, size_t> col;
  for (size_t i = 0; i < csv.header.size(); ++i) col[csv.header[i]] = i;
  auto need = [&](const char* name) {
    auto it = col.find(name);
    if (it == col.end()) throw DataError("results file missing column '" + std::string(name) + "'");
    return it->second;
  };

  std::vector<IterationResult> out;
  out.reserve(csv.rows.size());
  for (const auto& row : csv.rows) {
    IterationResult r;
    r.key.experiment = row[need("experiment")];
    r.key.ladder = row[need("ladder")];
    r.key.model = std::stoi(row[need("model")]);
    r.key.method = row[need("method")];
    r.key.n = std::stoull(row[need("n")]);
    r.key.pi = parse_double(row[need("pi")]);
    r.key.zeta1 = parse_double(row[need("zeta1")]);
    r.key.levels = std::stoi(row[need("levels")]);
    r.key.gamma_true = parse_double(row[need("gamma_true")]);
    r.key.m_gamma = std::stoll(row[need("m_gamma")]);
    r.key.delta_true = parse_double(row[need("delta_true")]);
    r.iteration = std::stoi(row[need("iteration")]);
    r.pi_hat_median = parse_double(row[need("pi_hat_median")]);
    r.pi_hat_mean = parse_double(row[need("pi_hat_mean")]);
    r.pi_s_median = parse_double(row[need("pi_s_median")]);
    r.pi_s_mean = parse_double(row[need("pi_s_mean")]);
    r.beta0_median = parse_double(row[need("beta0_median")]);
    r.pr_ystar_median = parse_double(row[need("pr_ystar_median")]);
    r.gamma_median = parse_double(row[need("gamma_median")]);
    r.delta_median = parse_double(row[need("delta_median")]);
    r.sample_test_prev = parse_double(row[need("sample_test_prev")]);
    r.true_pi = parse_double(row[need("true_pi")]);
    r.true_beta0 = parse_double(row[need("true_beta0")]);
    r.has_truth = !std::isnan(r.true_pi);
    r.divergences = std::stoull(row[need("divergences")]);
    r.max_rhat = parse_double(row[need("max_rhat")]);
    r.min_ess = parse_double(row[need("min_ess")]);
    r.warn_divergence = row[need("warn_divergence")] == "1";
    r.warn_rhat = row[need("warn_rhat")] == "1";
    r.mle_status = row[need("mle_status")];
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary(const std::string& results_dir) {
  const auto results = read_results_csv(results_dir + "/results.csv");
  const auto summaries = aggregate(results);

  const std::string path = results_dir + "/summary.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << "experiment,ladder,model,method,n,pi,zeta1,levels,gamma_true,m_gamma,delta_true,metric,"
         "count,median,q1,q3,whisker_lo,whisker_hi,n_outliers,mean,mc_se\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : summaries) {
    out << s.key.experiment << ',' << s.key.ladder << ',' << s.key.model << ',' << s.key.method
        << ',' << s.key.n << ',' << format_double(s.key.pi) << ',' << format_double(s.key.zeta1)
        << ',' << s.key.levels << ',' << format_double(s.key.gamma_true) << ',' << s.key.m_gamma
        << ',' << format_double(s.key.delta_true) << ',' << s.metric << ',' << s.box.count << ','
        << format_double(s.box.median) << ',' << format_double(s.box.q1) << ','
        << format_double(s.box.q3) << ',' << format_double(s.box.whisker_lo) << ','
        << format_double(s.box.whisker_hi) << ',' << s.box.n_outliers << ','
        << format_double(s.box.mean) << ',' << format_double(s.box.mc_se) << "\n";
    rows.push_back({{"experiment", s.key.experiment},
                    {"ladder", s.key.ladder},
                    {"model", s.key.model},
                    {"method", s.key.method},
                    {"n", s.key.n},
                    {"pi", s.key.pi},
                    {"zeta1", s.key.zeta1},
                    {"levels", s.key.levels},
                    {"gamma_true", s.key.gamma_true},
                    {"m_gamma", s.key.m_gamma},
                    {"delta_true", s.key.delta_true},
                    {"metric", s.metric},
                    {"count", s.box.count},
                    {"median", s.box.median},
                    {"q1", s.box.q1},
                    {"q3", s.box.q3},
                    {"whisker_lo", s.box.whisker_lo},
                    {"whisker_hi", s.box.whisker_hi},
                    {"n_outliers", s.box.n_outliers},
                    {"mean", s.box.mean},
                    {"mc_se", s.box.mc_se}});
  }
  if (!out) throw IoError("short write on '" + path + "'");
  out.close();

  std::ofstream js(results_dir + "/summary.json", std::ios::binary);
  if (!js) throw IoError("cannot write summary.json");
  js << rows.dump(2) << "\n";
}

PositiveDecomposition decompose_positives(int64_t sample_size, int64_t positives, double delta,
                                          double gamma) {
  PositiveDecomposition d;
  const double denom = delta + gamma - 1.0;
  if (denom == 0.0) return d;
  d.defined = true;
  const double p = static_cast<double>(positives) / static_cast<double>(sample_size);
  double tp = (p - (1.0 - gamma)) / denom * static_cast<double>(sample_size);
  tp = std::round(std::min(std::max(tp, 0.0), static_cast<double>(sample_size)));
  d.true_positives = tp;
  d.false_positives = static_cast<double>(positives) - tp;
  d.implied_prevalence = tp / static_cast<double>(sample_size);
  return d;
}

FeedbackOutcome run_feedback_analysis(const ExperimentConfig& cfg) {
  if (cfg.experiment != ExperimentId::Feedback) {
    throw ConfigError("run_feedback_analysis needs an experiment = \"feedback\" config");
  }
  auto errors = cfg.validate();
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }

  const std::string out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  const std::vector<Condition> conditions = enumerate_conditions(cfg);
  const Condition& cond = conditions.front();
  RunManifest manifest = plan(cfg, conditions);
  const TaskEntry& task = manifest.tasks.front();

  Population population = generate_population(cond.pop_config);
  Sample sample = draw_sample(population, cond.group.n, task.seeds.sample);
  sample.y_star = corrupt_measurements(sample.y, cond.group.delta_true, cond.group.gamma_true,
                                       task.seeds.corrupt);
  const int64_t positives = static_cast<int64_t>(
      std::llround(sample.mean_y_star() * static_cast<double>(sample.size())));

  const CovariateSchema schema = cond.pop_config.schema();
  const auto ladder = build_model_ladder(schema, cfg.ladder, cond.measurement);
  std::vector<int> models = cfg.models;
  std::sort(models.begin(), models.end());

  const double lo_q = (1.0 - cfg.interval_level) / 2.0;
  const double hi_q = 1.0 - lo_q;

  FeedbackOutcome fo;
  fo.output_dir = out_dir;
  fo.posterior_csv = out_dir + "/feedback_posterior.csv";
  fo.prior_draws_csv = out_dir + "/feedback_prior_draws.csv";
  fo.worked_table_csv = out_dir + "/feedback_worked_table.csv";
  fo.summary_json = out_dir + "/feedback.json";

  std::ofstream post(fo.posterior_csv, std::ios::binary);
  if (!post) throw IoError("cannot write " + fo.posterior_csv);
  post << "model,quantity,median,lo,hi\n";

  std::ofstream worked(fo.worked_table_csv, std::ios::binary);
  if (!worked) throw IoError("cannot write " + fo.worked_table_csv);
  worked << "kind,model,sample_size,positives,sensitivity,specificity,false_positives,"
            "true_positives,implied_prevalence\n";
  // The reference decomposition rows (delta = 1, specificity moved by hand).
  for (double g : {0.952, 0.909}) {
    const auto d = decompose_positives(200, 100, 1.0, g);
    worked << "reference,,200,100,1," << format_double(g) << ','
           << format_double(d.false_positives) << ',' << format_double(d.true_positives) << ','
           << format_double(d.implied_prevalence) << "\n";
  }

  nlohmann::json summary;
  summary["condition"] = cond.group.group_label();
  summary["sample_positives"] = positives;
  summary["sample_test_prev"] = sample.mean_y_star();
  summary["interval_level"] = cfg.interval_level;

  for (int m : models) {
    const ModelSpec& spec = ladder[static_cast<size_t>(m)];
    const ParamLayout layout = ParamLayout::build(spec, schema);
    LogDensity density(LikelihoodData::build(sample, spec, schema), spec, layout);
    McmcConfig mcmc = cfg.mcmc;
    uint64_t mstate = task.seeds.mcmc_base ^ hash_label("model=" + std::to_string(m));
    mcmc.seed = splitmix64(mstate);
    const PosteriorDraws draws = sample_posterior(density, mcmc);

    const BoundCells pop_cells =
        bind_cells(cell_table(population.rows, spec, schema, CountKind::PopulationN), layout);
    const BoundCells sample_cells =
        bind_cells(cell_table(sample.rows, spec, schema, CountKind::SampleN), layout);
    const EstimandDraws est =
        estimand_draws(draws, pop_cells, sample_cells, layout, spec.measurement);

    auto emit = [&](const std::string& what, const std::vector<double>& v) {
      post << m << ',' << what << ',' << format_double(quantile_type7(v, 0.5)) << ','
           << format_double(quantile_type7(v, lo_q)) << ','
           << format_double(quantile_type7(v, hi_q)) << "\n";
    };
    emit("pi_hat", est.pi_pop);
    emit("pi_s_hat", est.pi_sample);
    emit("pr_ystar", est.pr_ystar);
    double gamma_med = 1.0, delta_med = 1.0;
    if (layout.gamma_index >= 0) {
      const auto g = draws.column(static_cast<size_t>(layout.gamma_index));
      gamma_med = quantile_type7(g, 0.5);
      emit("gamma", g);
    }
    if (layout.delta_index >= 0) {
      const auto d = draws.column(static_cast<size_t>(layout.delta_index));
      delta_med = quantile_type7(d, 0.5);
      emit("delta", d);
    } else {
      delta_med = spec.measurement.kind == MeasurementKind::None ? 1.0 : spec.measurement.delta;
    }

    const auto d = decompose_positives(static_cast<int64_t>(sample.size()), positives, delta_med,
                                       gamma_med);
    worked << "model," << m << ',' << sample.size() << ',' << positives << ','
           << format_double(delta_med) << ',' << format_double(gamma_med) << ','
           << format_double(d.false_positives) << ',' << format_double(d.true_positives) << ','
           << format_double(d.implied_prevalence) << "\n";
  }
  post.close();
  worked.close();

  // Prior predictive for the simplest and fullest models in the run.
  std::ofstream prior(fo.prior_draws_csv, std::ios::binary);
  if (!prior) throw IoError("cannot write " + fo.prior_draws_csv);
  prior << "model,draw,pi,pr_ystar\n";
  const SeedStream seeds{cfg.master_seed};
  for (int m : {models.front(), models.back()}) {
    const ModelSpec& spec = ladder[static_cast<size_t>(m)];
    const CellTable pop_table = cell_table(population.rows, spec, schema, CountKind::PopulationN);
    const uint64_t seed =
        seeds.derive("priorpred|" + cond.group.group_label() + "|model=" + std::to_string(m));
    const PriorPredictive pp = prior_predictive(spec, schema, pop_table, cfg.prior_draws, seed);
    double below = 0.0;
    for (size_t i = 0; i < pp.pi.size(); ++i) {
      prior << m << ',' << i << ',' << format_double(pp.pi[i]) << ','
            << format_double(pp.pr_ystar[i]) << "\n";
      if (pp.pi[i] < 0.001) below += 1.0;
    }
    summary["prior_mass_below_0.001_model" + std::to_string(m)] =
        below / static_cast<double>(pp.pi.size());
    if (models.front() == models.back()) break;
  }
  prior.close();

  std::ofstream js(fo.summary_json, std::ios::binary);
  if (!js) throw IoError("cannot write " + fo.summary_json);
  js << summary.dump(2) << "\n";
  return fo;
}

}  // namespace prevmrp
