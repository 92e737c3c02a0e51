#include "prevmrp/csv.hpp"

#include <fstream>

#include "prevmrp/common.hpp"

namespace prevmrp {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  for (;;) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

int CsvFile::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CsvFile read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path + "'");
  CsvFile csv;
  std::string line;
  if (!std::getline(in, line)) return csv;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  csv.header = split_line(line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != csv.header.size()) {
      throw DataError("'" + path + "': row with " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(csv.header.size()));
    }
    csv.rows.push_back(std::move(fields));
  }
  return csv;
}

}  // namespace prevmrp
