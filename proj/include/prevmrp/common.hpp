#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace prevmrp {

// Error taxonomy: schema/config problems are programmer or input errors and
// throw; numeric outcomes (separation, undefined bounds) are ordinary results
// carried in status fields.
struct SchemaError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct DataError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Canonical shortest-round-trip text for doubles; the single formatting used
/// in every persisted file so outputs are byte-stable.
std::string format_double(double v);

std::string format_double_g(double v);  // %g, for human-facing CLI output

}  // namespace prevmrp
