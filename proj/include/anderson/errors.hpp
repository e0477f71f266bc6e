#pragma once

#include <stdexcept>
#include <string>

namespace anderson {

// Rejected inputs or configuration. The CLI maps these to exit code 2.
struct validation_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Failures while computing (solver breakdown, unstable windows, empty
// clusters). The CLI maps these to exit code 1.
struct compute_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace anderson
