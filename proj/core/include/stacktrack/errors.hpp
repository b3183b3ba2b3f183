#pragma once

#include <stdexcept>
#include <string>

namespace stacktrack {

// Shape/dimension violations on tensor ops.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke an API precondition (non-scalar loss, out-of-order frames, ...).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input files.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace stacktrack
