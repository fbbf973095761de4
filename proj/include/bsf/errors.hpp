#pragma once

#include <stdexcept>
#include <string>

namespace bsf {

// Base for every error the toolkit raises. exit_code() is the process exit
// code the CLI maps the error to: 1 validation/training, 2 io/not-found,
// 3 invalid argument.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
    virtual int exit_code() const noexcept { return 1; }
};

class InvalidArgument : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 3; }
};

class NotFoundError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class SchemaError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class StateError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace bsf
