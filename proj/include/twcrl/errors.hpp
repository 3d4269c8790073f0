#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace twcrl {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user-supplied data (files, configs, maps). The CLI maps these to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

class InvalidTrajectory : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class InvalidHorizon : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class OutOfRange : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class DimensionMismatch : public ValidationError {
public:
    DimensionMismatch(const std::string& what, std::size_t expected, std::size_t got)
        : ValidationError(what + ": expected dimension " + std::to_string(expected) + ", got " +
                          std::to_string(got)) {}
    using ValidationError::ValidationError;
};

class MissingGoals : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class NoData : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Malformed record in a line-oriented file.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed ASCII maze map; row/col locate the offending character (0-based).
class MapError : public ValidationError {
public:
    MapError(std::size_t row, std::size_t col, const std::string& what)
        : ValidationError("map row " + std::to_string(row) + ", column " + std::to_string(col) + ": " + what),
          row_(row), col_(col) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    std::size_t row_;
    std::size_t col_;
};

/// Runtime failures (exit code 2 in the CLI).
class ExpertStuck : public Error {
public:
    using Error::Error;
};

class OptimDiverged : public Error {
public:
    using Error::Error;
};

}  // namespace twcrl
