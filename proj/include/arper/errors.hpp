#ifndef ARPER_ERRORS_HPP
#define ARPER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace arper {

// Malformed input data (bad JSONL record, unknown split label, ...).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally valid input that violates a contract (empty corpus, unknown
// intent/slot, out-of-range argument, out-of-vocabulary token, ...).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Dimension / layout mismatch between tensors or checkpoints.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Inconsistent run / method configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss encountered while training.
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace arper

#endif
