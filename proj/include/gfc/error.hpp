#pragma once

#include <stdexcept>
#include <string>

namespace gfc {

// Exit-code taxonomy used by the CLI:
//   0 success, 2 config error, 3 estimation failure, 4 overlap refusal,
//   5 validation failure.
enum class ExitCode : int {
    Ok = 0,
    ConfigError = 2,
    EstimationFailure = 3,
    OverlapRefusal = 4,
    ValidationFailure = 5,
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unestimable factor / empty stratum / all units dropped. The message names
// the offending factor and cell.
struct EstimationError : std::runtime_error {
    explicit EstimationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Forecast support violation above the configured threshold.
struct OverlapRefusal : std::runtime_error {
    double violation_fraction;
    OverlapRefusal(const std::string& msg, double frac)
        : std::runtime_error(msg), violation_fraction(frac) {}
};

} // namespace gfc
