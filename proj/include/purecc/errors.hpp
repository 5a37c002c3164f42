#pragma once

#include <stdexcept>
#include <string>

namespace purecc {

// Every error raised by the library derives from Error so callers can catch
// the family once; the subclasses exist so the CLI can map them to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericInputError : public Error {
public:
    using Error::Error;
};

class FreezeViolation : public Error {
public:
    using Error::Error;
};

class StateError : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

// Non-finite loss during training or non-finite state during sampling.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class PrerequisiteError : public Error {
public:
    using Error::Error;
};

}  // namespace purecc
