#include "prevmrp/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "prevmrp/common.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/rng.hpp"

namespace prevmrp {

namespace {

const std::vector<uint64_t> kMenuN1_1{20, 40, 400, 4000, 40000};
const std::vector<uint64_t> kMenuNMid{400, 4000};
const std::vector<uint64_t> kMenuNLate{4000};
const std::vector<double> kMenuPi{0.001, 0.01, 0.1, 0.2};
const std::vector<double> kMenuZeta1{0.0, 0.3};
const std::vector<int> kMenuLevels{4, 10, 20, 40};
const std::vector<double> kMenuGamma{0.98, 0.99, 0.995, 1.0};
const std::vector<int64_t> kMenuMGamma{400, 800, 1200, 8000};

template <typename T>
bool on_menu(const std::vector<T>& menu, T v) {
  return std::find(menu.begin(), menu.end(), v) != menu.end();
}

bool on_menu(const std::vector<double>& menu, double v) {
  for (double m : menu) {
    if (std::abs(m - v) <= 1e-12) return true;
  }
  return false;
}

template <typename T>
void read_list(const nlohmann::json& j, const char* key, std::vector<T>& out) {
  if (!j.contains(key)) return;
  out.clear();
  for (const auto& v : j.at(key)) out.push_back(v.get<T>());
}

}  // namespace

std::string to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::Exp1_1:
      return "exp1_1";
    case ExperimentId::Exp1_2:
      return "exp1_2";
    case ExperimentId::Exp2_1:
      return "exp2_1";
    case ExperimentId::Exp2_2:
      return "exp2_2";
    case ExperimentId::Exp3:
      return "exp3";
    case ExperimentId::Feedback:
      return "feedback";
    case ExperimentId::RealData:
      return "real_data";
  }
  return "?";
}

ExperimentId experiment_from_string(const std::string& name) {
  if (name == "exp1_1") return ExperimentId::Exp1_1;
  if (name == "exp1_2") return ExperimentId::Exp1_2;
  if (name == "exp2_1") return ExperimentId::Exp2_1;
  if (name == "exp2_2") return ExperimentId::Exp2_2;
  if (name == "exp3") return ExperimentId::Exp3;
  if (name == "feedback") return ExperimentId::Feedback;
  if (name == "real_data") return ExperimentId::RealData;
  throw ConfigError("unknown experiment '" + name + "'");
}

Measurement RealDataConfig::build_measurement() const {
  if (measurement == "none") return Measurement::none();
  if (measurement == "known") return Measurement::known(delta, gamma);
  if (measurement == "estimated_specificity") {
    return Measurement::estimated_specificity(calibration, delta);
  }
  if (measurement == "estimated_both") return Measurement::estimated_both(calibration);
  throw ConfigError("unknown measurement kind '" + measurement + "'");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.experiment = experiment_from_string(j.at("experiment").get<std::string>());

  // Paper defaults per experiment; explicit fields override.
  switch (c.experiment) {
    case ExperimentId::Exp1_1:
      c.n_values = kMenuN1_1;
      c.pi_values = kMenuPi;
      c.zeta1_values = {0.0};
      c.level_values = {20};
      c.models = {0};
      break;
    case ExperimentId::Exp1_2:
      c.n_values = kMenuNMid;
      c.pi_values = {0.01};
      c.zeta1_values = {0.0, 0.3};
      c.level_values = {20};
      break;
    case ExperimentId::Exp2_1:
      c.n_values = kMenuNMid;
      c.pi_values = {0.01};
      c.zeta1_values = {0.3};
      c.level_values = {20};
      c.gamma_values = kMenuGamma;
      break;
    case ExperimentId::Exp2_2:
      c.n_values = kMenuNLate;
      c.pi_values = {0.01};
      c.zeta1_values = {0.3};
      c.level_values = {20};
      c.gamma_values = kMenuGamma;
      c.m_gamma_values = kMenuMGamma;
      break;
    case ExperimentId::Exp3:
      c.n_values = kMenuNLate;
      c.pi_values = {0.01};
      c.zeta1_values = {0.3};
      c.level_values = {20};
      c.gamma_values = kMenuGamma;
      c.m_gamma_values = kMenuMGamma;
      c.ladder = LadderVariant::TwoOverall;
      break;
    case ExperimentId::Feedback:
      c.n_values = {4000};
      c.pi_values = {0.01};
      c.zeta1_values = {0.3};
      c.level_values = {20};
      c.gamma_values = {0.995};
      c.m_gamma_values = {800};
      c.iterations = 1;
      c.interval_level = 0.8;
      break;
    case ExperimentId::RealData:
      c.iterations = 1;
      break;
  }

  if (j.contains("iterations")) c.iterations = j.at("iterations").get<int>();
  if (j.contains("master_seed")) c.master_seed = j.at("master_seed").get<uint64_t>();
  if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  if (j.contains("population")) {
    const auto& p = j.at("population");
    if (p.contains("size")) c.population_size = p.at("size").get<uint64_t>();
    if (p.contains("covariates")) c.n_covariates = p.at("covariates").get<int>();
  }
  read_list(j, "n", c.n_values);
  read_list(j, "pi", c.pi_values);
  read_list(j, "zeta1", c.zeta1_values);
  read_list(j, "levels", c.level_values);
  read_list(j, "gamma_true", c.gamma_values);
  read_list(j, "m_gamma", c.m_gamma_values);
  if (j.contains("delta_true")) c.delta_true = j.at("delta_true").get<double>();
  if (j.contains("m_delta")) c.m_delta = j.at("m_delta").get<int64_t>();
  if (j.contains("estimate_both")) c.estimate_both = j.at("estimate_both").get<bool>();
  if (j.contains("ladder")) {
    const auto name = j.at("ladder").get<std::string>();
    if (name == "basic") {
      c.ladder = LadderVariant::Basic;
    } else if (name == "one_overall") {
      c.ladder = LadderVariant::OneOverall;
    } else if (name == "two_overall") {
      c.ladder = LadderVariant::TwoOverall;
    } else {
      throw ConfigError("unknown ladder variant '" + name + "'");
    }
  }
  read_list(j, "models", c.models);
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    if (m.contains("chains")) c.mcmc.chains = m.at("chains").get<int>();
    if (m.contains("warmup")) c.mcmc.warmup = m.at("warmup").get<int>();
    if (m.contains("samples")) c.mcmc.samples = m.at("samples").get<int>();
    if (m.contains("target_accept")) c.mcmc.target_accept = m.at("target_accept").get<double>();
    if (m.contains("max_depth")) c.mcmc.max_depth = m.at("max_depth").get<int>();
  }
  if (j.contains("save_draws")) c.save_draws = j.at("save_draws").get<bool>();
  if (j.contains("save_population")) c.save_population = j.at("save_population").get<bool>();
  if (j.contains("interval_level")) c.interval_level = j.at("interval_level").get<double>();
  if (j.contains("prior_draws")) c.prior_draws = j.at("prior_draws").get<size_t>();
  if (j.contains("allow_off_grid")) c.allow_off_grid = j.at("allow_off_grid").get<bool>();
  if (j.contains("workers")) c.workers = j.at("workers").get<int>();
  if (j.contains("max_tasks")) c.max_tasks = j.at("max_tasks").get<uint64_t>();

  if (j.contains("real_data")) {
    const auto& r = j.at("real_data");
    c.real_data.sample_csv = r.value("sample_csv", "");
    c.real_data.cells_csv = r.value("cells_csv", "");
    if (r.contains("covariates")) {
      for (const auto& cv : r.at("covariates")) {
        Covariate cov;
        cov.name = cv.at("name").get<std::string>();
        cov.levels = cv.at("levels").get<int>();
        cov.has_continuous = cv.value("continuous", false);
        c.real_data.covariates.push_back(cov);
      }
    }
    c.real_data.measurement = r.value("measurement", "none");
    c.real_data.delta = r.value("delta", 1.0);
    c.real_data.gamma = r.value("gamma", 1.0);
    if (r.contains("calibration")) {
      const auto& cal = r.at("calibration");
      c.real_data.calibration.tp = cal.value("tp", int64_t{0});
      c.real_data.calibration.fn = cal.value("fn", int64_t{0});
      c.real_data.calibration.tn = cal.value("tn", int64_t{0});
      c.real_data.calibration.fp = cal.value("fp", int64_t{0});
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config field error: " + std::string(e.what()));
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["experiment"] = to_string(experiment);
  j["iterations"] = iterations;
  j["master_seed"] = master_seed;
  j["output_dir"] = output_dir;
  j["population"] = {{"size", population_size}, {"covariates", n_covariates}};
  j["n"] = n_values;
  j["pi"] = pi_values;
  j["zeta1"] = zeta1_values;
  j["levels"] = level_values;
  j["gamma_true"] = gamma_values;
  j["m_gamma"] = m_gamma_values;
  j["delta_true"] = delta_true;
  j["m_delta"] = m_delta;
  j["estimate_both"] = estimate_both;
  j["ladder"] = to_string(ladder);
  j["models"] = models;
  j["mcmc"] = {{"chains", mcmc.chains},
               {"warmup", mcmc.warmup},
               {"samples", mcmc.samples},
               {"target_accept", mcmc.target_accept},
               {"max_depth", mcmc.max_depth}};
  j["save_draws"] = save_draws;
  j["save_population"] = save_population;
  j["interval_level"] = interval_level;
  j["prior_draws"] = prior_draws;
  j["allow_off_grid"] = allow_off_grid;
  if (experiment == ExperimentId::RealData) {
    nlohmann::json r;
    r["sample_csv"] = real_data.sample_csv;
    r["cells_csv"] = real_data.cells_csv;
    r["measurement"] = real_data.measurement;
    r["delta"] = real_data.delta;
    r["gamma"] = real_data.gamma;
    r["calibration"] = {{"tp", real_data.calibration.tp},
                        {"fn", real_data.calibration.fn},
                        {"tn", real_data.calibration.tn},
                        {"fp", real_data.calibration.fp}};
    nlohmann::json covs = nlohmann::json::array();
    for (const auto& cv : real_data.covariates) {
      covs.push_back({{"name", cv.name}, {"levels", cv.levels}, {"continuous", cv.has_continuous}});
    }
    r["covariates"] = covs;
    j["real_data"] = r;
  }
  return j;
}

std::vector<std::string> ExperimentConfig::validate() const {
  std::vector<std::string> errs;
  auto err = [&](const std::string& m) { errs.push_back(m); };

  if (output_dir.empty()) err("output_dir is required");
  if (iterations < 1) err("iterations must be positive");
  if (experiment == ExperimentId::RealData) {
    if (real_data.sample_csv.empty()) err("real_data.sample_csv is required");
    if (real_data.cells_csv.empty()) err("real_data.cells_csv is required");
    if (real_data.covariates.empty()) err("real_data.covariates is required");
    try {
      real_data.build_measurement();
    } catch (const std::exception& e) {
      err(e.what());
    }
    return errs;
  }

  if (n_values.empty()) err("grid 'n' must not be empty");
  if (pi_values.empty()) err("grid 'pi' must not be empty");
  if (zeta1_values.empty()) err("grid 'zeta1' must not be empty");
  if (level_values.empty()) err("grid 'levels' must not be empty");

  const bool measures = experiment == ExperimentId::Exp2_1 || experiment == ExperimentId::Exp2_2 ||
                        experiment == ExperimentId::Exp3 || experiment == ExperimentId::Feedback;
  const bool estimates = experiment == ExperimentId::Exp2_2 || experiment == ExperimentId::Exp3 ||
                         experiment == ExperimentId::Feedback;
  if (measures && gamma_values.empty()) err("grid 'gamma_true' must not be empty");
  if (estimates && m_gamma_values.empty()) err("grid 'm_gamma' must not be empty");

  if (!allow_off_grid) {
    const auto& n_menu = experiment == ExperimentId::Exp1_1
                             ? kMenuN1_1
                             : (experiment == ExperimentId::Exp1_2 || experiment == ExperimentId::Exp2_1
                                    ? kMenuNMid
                                    : kMenuNLate);
    for (uint64_t n : n_values) {
      if (!on_menu(n_menu, n)) err("sample size " + std::to_string(n) + " is off the published grid");
    }
    for (double p : pi_values) {
      if (!on_menu(kMenuPi, p)) err("prevalence " + format_double(p) + " is off the published grid");
    }
    for (double z : zeta1_values) {
      if (!on_menu(kMenuZeta1, z)) err("zeta1 " + format_double(z) + " is off the published grid");
    }
    for (int l : level_values) {
      if (!on_menu(kMenuLevels, l)) err("levels " + std::to_string(l) + " is off the published grid");
    }
    for (double g : gamma_values) {
      if (!on_menu(kMenuGamma, g)) err("specificity " + format_double(g) + " is off the published grid");
    }
    for (int64_t m : m_gamma_values) {
      if (!on_menu(kMenuMGamma, m)) err("m_gamma " + std::to_string(m) + " is off the published grid");
    }
  }

  // Calibration grids must produce integer expected counts regardless of the
  // off-grid override.
  if (estimates) {
    for (double g : gamma_values) {
      for (int64_t m : m_gamma_values) {
        try {
          calibration_counts(g, m);
        } catch (const std::exception& e) {
          err(e.what());
        }
      }
    }
    if (estimate_both) {
      try {
        sensitivity_calibration_counts(delta_true, m_delta);
      } catch (const std::exception& e) {
        err(e.what());
      }
    }
  }

  for (uint64_t n : n_values) {
    if (n > population_size) {
      err("sample size " + std::to_string(n) + " exceeds the population size");
    }
  }
  if (models.empty()) err("'models' must not be empty");
  std::set<int> seen;
  for (int m : models) {
    if (m < 0 || m > 5) err("model index " + std::to_string(m) + " outside 0..5");
    if (!seen.insert(m).second) err("duplicate model index " + std::to_string(m));
  }
  if (delta_true < 0.0 || delta_true > 1.0) err("delta_true must lie in [0, 1]");
  if (!(interval_level > 0.0 && interval_level < 1.0)) err("interval_level must lie in (0, 1)");
  if (experiment == ExperimentId::Feedback) {
    if (n_values.size() != 1 || pi_values.size() != 1 || zeta1_values.size() != 1 ||
        level_values.size() != 1 || gamma_values.size() != 1 || m_gamma_values.size() != 1) {
      err("the feedback analysis runs one condition: all grids must be singletons");
    }
  }
  try {
    mcmc.validate();
  } catch (const std::exception& e) {
    err(e.what());
  }
  if (n_covariates < 5 && experiment != ExperimentId::Exp1_1) {
    err("experiments with the model ladder need at least 5 covariates");
  }
  return errs;
}

uint64_t ExperimentConfig::config_hash() const { return hash_label(to_json().dump()); }

int ExperimentConfig::resolve_workers() const {
  if (workers > 0) return workers;
  if (const char* env = std::getenv("PREVMRP_WORKERS")) {
    const int w = std::atoi(env);
    if (w > 0) return w;
  }
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace prevmrp
