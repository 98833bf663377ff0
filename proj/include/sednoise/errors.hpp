#pragma once

#include <stdexcept>
#include <string>

namespace sednoise {

/// Broad failure classes. The CLI maps them onto process exit codes.
enum class ErrorKind { Config = 1, Data = 2, Numeric = 3 };

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

  private:
    ErrorKind kind_;
};

// Invalid parameters, schema violations, inconsistent shapes.
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct ArgumentError : Error {
    explicit ArgumentError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error(ErrorKind::Config, w) {}
};
struct StateError : Error {
    explicit StateError(const std::string& w) : Error(ErrorKind::Config, w) {}
};

// Problems with input files or dataset contents.
struct DataError : Error {
    explicit DataError(const std::string& w) : Error(ErrorKind::Data, w) {}
};
struct FormatError : DataError {
    using DataError::DataError;
};
struct DuplicationError : DataError {
    using DataError::DataError;
};
struct ConsistencyError : DataError {
    using DataError::DataError;
};
struct EmptySubsetError : DataError {
    using DataError::DataError;
};

// Non-finite values during optimization.
struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

}  // namespace sednoise
