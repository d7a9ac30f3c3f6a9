#pragma once

#include <stdexcept>
#include <string>

namespace synic {

// Bad or inconsistent configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or unusable input data (CLI exit code 3).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An API contract was violated by the caller.
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Metric is undefined for the given inputs (e.g. single-class ROC-AUC).
struct UndefinedMetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training loss became non-finite.
struct TrainDivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace synic
