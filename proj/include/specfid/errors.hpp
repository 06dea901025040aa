#pragma once

#include <stdexcept>
#include <string>

namespace specfid {

// Base for every error raised by the library. The CLI maps these onto exit
// codes; the Python module re-raises them as ValueError/OSError.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed file structure (bad magic, ragged CSV, ...).
class FormatError : public Error {
public:
    using Error::Error;
};

// File shorter or longer than its header declares.
class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

// Values that cannot be represented: NaN/Inf entries, unparsable cells.
class DataError : public Error {
public:
    using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

// Invalid experiment or CLI configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace specfid
