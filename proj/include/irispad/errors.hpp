#pragma once

#include <stdexcept>
#include <string>

namespace irispad {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// File exists but its contents do not match the expected format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Input violates a documented precondition or invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Configuration file or override is invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// SVM training failed to converge within its iteration budget.
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace irispad
