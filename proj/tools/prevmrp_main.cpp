// prevmrp: synthetic-population simulation harness for prevalence estimation
// under imperfect tests (multilevel regression + poststratification with a
// measurement-error layer).
//
// Subcommands:
//   run <config.json>        execute an experiment grid
//   resume <manifest.json>   finish an interrupted grid
//   summarize <results-dir>  rebuild summary.csv / summary.json
//   bounds --sens D --spec G print the attainable test-prevalence interval
//   validate <config.json>   schema-check a config and exit
//
// Exit codes: 0 success, 1 config error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "prevmrp/common.hpp"
#include "prevmrp/config.hpp"
#include "prevmrp/population.hpp"
#include "prevmrp/runner.hpp"

namespace {

int cmd_run(const std::string& config_path) {
  const auto cfg = prevmrp::ExperimentConfig::from_file(config_path);
  const auto errors = cfg.validate();
  if (!errors.empty()) {
    for (const auto& e : errors) std::fprintf(stderr, "config error: %s\n", e.c_str());
    return 1;
  }
  if (cfg.experiment == prevmrp::ExperimentId::Feedback) {
    const auto out = prevmrp::run_feedback_analysis(cfg);
    std::printf("feedback analysis written to %s\n", out.output_dir.c_str());
    return 0;
  }
  const auto out = prevmrp::run_experiment(cfg);
  std::printf("%zu/%zu tasks run (%zu already complete)\n", out.tasks_run, out.tasks_total,
              out.tasks_skipped);
  if (!out.complete) {
    std::printf("run stopped early; resume with: prevmrp resume %s\n", out.manifest_path.c_str());
  } else {
    std::printf("results: %s\n", out.results_csv.c_str());
  }
  return 0;
}

int cmd_resume(const std::string& manifest_path) {
  const auto out = prevmrp::resume_run(manifest_path);
  std::printf("%zu/%zu tasks run (%zu already complete)\n", out.tasks_run, out.tasks_total,
              out.tasks_skipped);
  if (out.complete) std::printf("results: %s\n", out.results_csv.c_str());
  return 0;
}

int cmd_bounds(double sens, double spec) {
  const auto b = prevmrp::observable_bounds(sens, spec);
  if (!b.defined) {
    std::printf("undefined (sensitivity equals 1 - specificity)\n");
  } else {
    std::printf("[%s, %s]\n", prevmrp::format_double_g(b.lo).c_str(),
                prevmrp::format_double_g(b.hi).c_str());
  }
  return 0;
}

int cmd_validate(const std::string& config_path) {
  const auto cfg = prevmrp::ExperimentConfig::from_file(config_path);
  const auto errors = cfg.validate();
  if (errors.empty()) {
    std::printf("ok\n");
    return 0;
  }
  for (const auto& e : errors) std::fprintf(stderr, "config error: %s\n", e.c_str());
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prevalence estimation simulation harness"};
  app.require_subcommand(1);

  std::string config_path, manifest_path, results_dir;
  double sens = 0.0, spec = 0.0;

  auto* run = app.add_subcommand("run", "execute an experiment from a config file");
  run->add_option("config", config_path, "config JSON file")->required();

  auto* resume = app.add_subcommand("resume", "finish an incomplete run");
  resume->add_option("manifest", manifest_path, "manifest.json of the interrupted run")->required();

  auto* summarize = app.add_subcommand("summarize", "aggregate a results directory");
  summarize->add_option("results_dir", results_dir, "directory containing results.csv")->required();

  auto* bounds = app.add_subcommand("bounds", "attainable test-prevalence interval");
  bounds->add_option("--sens", sens, "test sensitivity")->required();
  bounds->add_option("--spec", spec, "test specificity")->required();

  auto* validate = app.add_subcommand("validate", "schema-check a config file");
  validate->add_option("config", config_path, "config JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (resume->parsed()) return cmd_resume(manifest_path);
    if (summarize->parsed()) {
      prevmrp::write_summary(results_dir);
      std::printf("summary written to %s\n", results_dir.c_str());
      return 0;
    }
    if (bounds->parsed()) return cmd_bounds(sens, spec);
    if (validate->parsed()) return cmd_validate(config_path);
  } catch (const prevmrp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const prevmrp::SchemaError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
