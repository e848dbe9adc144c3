#pragma once

#include <stdexcept>
#include <string>

namespace stdit {

// Error taxonomy shared by the whole library. The CLI maps these onto exit
// codes: ConfigError/DataError -> 2, everything else here -> 3 (command-line
// usage errors are handled by the argument parser and exit 1).

// Invalid configuration value or an unusable combination of settings.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problem with input data: unreadable files, parse failures, id mismatches.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch. Messages always name both shapes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Out-of-range timestep or coordinate.
struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (diverged training,
// failed evaluation inside a gradient check).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace stdit
