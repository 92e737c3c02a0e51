#include "prevmrp/manifest.hpp"

#include <cstdio>
#include <fstream>

#include "prevmrp/common.hpp"

namespace prevmrp {

std::string TaskEntry::file_name() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "task_%06llu.csv", static_cast<unsigned long long>(index));
  return buf;
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json j;
  j["code_version"] = code_version;
  j["config_hash"] = config_hash;
  j["config"] = config.to_json();
  nlohmann::json tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) {
    nlohmann::json e;
    e["index"] = t.index;
    e["condition"] = t.condition.group_label();
    e["iteration"] = t.iteration;
    e["seeds"] = {{"population", t.seeds.population},
                  {"sample", t.seeds.sample},
                  {"corrupt", t.seeds.corrupt},
                  {"mcmc_base", t.seeds.mcmc_base}};
    if (t.calibration.m_gamma() > 0 || t.calibration.m_delta() > 0) {
      e["calibration"] = {{"tp", t.calibration.tp},
                          {"fn", t.calibration.fn},
                          {"tn", t.calibration.tn},
                          {"fp", t.calibration.fp}};
    }
    e["status"] = t.done ? "done" : "pending";
    tasks_json.push_back(std::move(e));
  }
  j["tasks"] = std::move(tasks_json);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << j.dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw IoError("cannot move manifest into place at '" + path + "'");
  }
}

RunManifest RunManifest::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest is not valid JSON: " + std::string(e.what()));
  }
  RunManifest m;
  m.code_version = j.value("code_version", "");
  m.config_hash = j.at("config_hash").get<uint64_t>();
  m.config = ExperimentConfig::from_json(j.at("config"));
  if (m.config.config_hash() != m.config_hash) {
    throw ConfigError("manifest config hash does not match its embedded config");
  }
  for (const auto& e : j.at("tasks")) {
    TaskEntry t;
    t.index = e.at("index").get<uint64_t>();
    t.iteration = e.at("iteration").get<int>();
    t.seeds.population = e.at("seeds").at("population").get<uint64_t>();
    t.seeds.sample = e.at("seeds").at("sample").get<uint64_t>();
    t.seeds.corrupt = e.at("seeds").at("corrupt").get<uint64_t>();
    t.seeds.mcmc_base = e.at("seeds").at("mcmc_base").get<uint64_t>();
    t.done = e.value("status", "pending") == std::string("done");
    m.tasks.push_back(std::move(t));
  }
  return m;
}

}  // namespace prevmrp
