#pragma once

#include <stdexcept>
#include <string>

namespace kronmark {

// Extents of two tensors (or a tensor and an operation) disagree.
class DimensionError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// A caller broke a documented precondition that is not about shapes.
class ContractError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

// Layer or model configuration is not realizable (e.g. n does not divide s).
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// A checkpoint was produced for a different configuration.
class CompatibilityError : public ConfigError {
   public:
    using ConfigError::ConfigError;
};

// Data handed to an algorithm is empty or degenerate.
class InputError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// A metric is mathematically undefined for the given data (zero variance,
// zero visible keypoints, infinite divergence).
class UndefinedMetricError : public std::domain_error {
   public:
    using std::domain_error::domain_error;
};

// Malformed file content.
class ParseError : public std::runtime_error {
   public:
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const noexcept { return line_; }

   private:
    std::size_t line_;
};

class MissingFileError : public std::runtime_error {
   public:
    explicit MissingFileError(const std::string& path)
        : std::runtime_error("missing file: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

   private:
    std::string path_;
};

}  // namespace kronmark
