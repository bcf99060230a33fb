#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace jdna {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Mask or gradient keyed differently from the parameters it is used with.
class AlignmentError : public Error {
public:
    using Error::Error;
};

// Invalid model/experiment configuration. `key` names the offending entry when known.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg, std::string key = {})
        : Error(msg), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Bad user-supplied data (CSV rows, argument ranges). `row` is 1-based, 0 when not row-scoped.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg, std::size_t row = 0)
        : Error(msg), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

// Malformed binary file; `offset` is the byte position where decoding failed.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::uint64_t offset)
        : Error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Singular systems, non-finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

// Training diverged; `step` is the 0-based step whose loss was non-finite.
class TrainingError : public NumericError {
public:
    TrainingError(const std::string& msg, std::size_t step)
        : NumericError(msg + " at step " + std::to_string(step)), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace jdna
