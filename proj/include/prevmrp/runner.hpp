#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prevmrp/config.hpp"
#include "prevmrp/manifest.hpp"
#include "prevmrp/metrics.hpp"

namespace prevmrp {

struct RunOutcome {
  std::string output_dir;
  std::string results_csv;
  std::string manifest_path;
  size_t tasks_total = 0;
  size_t tasks_run = 0;
  size_t tasks_skipped = 0;  // already complete (resume) or beyond max_tasks
  bool complete = false;     // every task has a shard
};

/// Execute a config end to end: plan tasks, run the pending ones on a worker
/// pool, stitch shards into results.csv, write summary files and the
/// manifest. Sampler warnings are recorded per row and never abort the grid.
RunOutcome run_experiment(const ExperimentConfig& cfg);

/// Finish an interrupted run: completed (condition, iteration) tasks are
/// never recomputed, and the stitched outputs are byte-identical to an
/// uninterrupted run's.
RunOutcome resume_run(const std::string& manifest_path);

/// Recompute summary.csv and summary.json from an existing results.csv.
void write_summary(const std::string& results_dir);

std::vector<IterationResult> read_results_csv(const std::string& path);

/// How many false/true positives a given specificity implies for an observed
/// positive count, and the prevalence that implies (integer true positives).
struct PositiveDecomposition {
  bool defined = false;  // false when delta + gamma == 1
  double false_positives = 0.0;
  double true_positives = 0.0;
  double implied_prevalence = 0.0;
};

PositiveDecomposition decompose_positives(int64_t sample_size, int64_t positives, double delta,
                                          double gamma);

struct FeedbackOutcome {
  std::string output_dir;
  std::string posterior_csv;
  std::string prior_draws_csv;
  std::string worked_table_csv;
  std::string summary_json;
};

/// The model-feedback diagnostic on one condition: posterior medians and
/// credible intervals of (pi_hat, Pr(y*=1), delta, gamma) per ladder model,
/// prior predictive draws for the simplest and fullest models, and the
/// positives = FP + TP decomposition table.
FeedbackOutcome run_feedback_analysis(const ExperimentConfig& cfg);

}  // namespace prevmrp
