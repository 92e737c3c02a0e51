#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prevmrp/config.hpp"
#include "prevmrp/metrics.hpp"

namespace prevmrp {

inline constexpr const char* kCodeVersion = "prevmrp 1.0.0";

struct TaskSeeds {
  uint64_t population = 0;
  uint64_t sample = 0;
  uint64_t corrupt = 0;
  uint64_t mcmc_base = 0;  // per-model seed = splitmix64(mcmc_base ^ hash("model=<m>"))
};

struct TaskEntry {
  uint64_t index = 0;
  ConditionKey condition;  // group key (no model/method)
  int iteration = 0;
  TaskSeeds seeds;
  CalibrationData calibration;  // (0,0,0,0) when nothing is estimated
  bool done = false;

  std::string file_name() const;  // tasks/task_%06u.csv
};

/// Everything needed to reproduce or resume a run: config (embedded), its
/// hash, the code version, and per-task seeds + completion status.
struct RunManifest {
  std::string code_version = kCodeVersion;
  uint64_t config_hash = 0;
  ExperimentConfig config;
  std::vector<TaskEntry> tasks;

  void write(const std::string& path) const;
  static RunManifest read(const std::string& path);
};

}  // namespace prevmrp
