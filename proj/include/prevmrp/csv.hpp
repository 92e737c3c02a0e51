#pragma once

#include <string>
#include <vector>

namespace prevmrp {

/// Minimal CSV: comma-separated, no quoting (all project files are plain
/// numeric/identifier columns), UTF-8, first row is the header.
struct CsvFile {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

CsvFile read_csv(const std::string& path);

}  // namespace prevmrp
