#pragma once

#include <stdexcept>
#include <string>

namespace fusionhead {

// Base of every error the library raises. exit_code() follows the CLI
// convention: 1 for runtime failures, 2 for usage and validation failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual int exit_code() const noexcept { return 1; }
};

class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

class FormatError : public InputError {
public:
    using InputError::InputError;
};

class CorruptionError : public InputError {
public:
    using InputError::InputError;
};

class ValidationError : public InputError {
public:
    using InputError::InputError;
};

class SpecError : public InputError {
public:
    using InputError::InputError;
};

class StratificationError : public InputError {
public:
    using InputError::InputError;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

class DegenerateRowError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace fusionhead
