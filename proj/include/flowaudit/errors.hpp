#pragma once

#include <stdexcept>
#include <string>

namespace flowaudit {

// Error taxonomy. Usage/input problems map to CLI exit code 2,
// runtime/numeric problems to exit code 3.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// -- input-class errors (exit 2) --

struct ParseError : Error {
    using Error::Error;
};

struct SchemaError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// -- runtime-class errors (exit 3) --

struct NumericError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    TrainingError(const std::string& msg, int epoch_index)
        : Error(msg), epoch(epoch_index) {}
    int epoch;
};

struct ContractError : Error {
    using Error::Error;
};

inline bool is_input_error(const std::exception& e) {
    return dynamic_cast<const ParseError*>(&e) != nullptr ||
           dynamic_cast<const SchemaError*>(&e) != nullptr ||
           dynamic_cast<const ConfigError*>(&e) != nullptr ||
           dynamic_cast<const IoError*>(&e) != nullptr;
}

}  // namespace flowaudit
