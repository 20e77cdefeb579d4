// Copyright 2026 The prunevis Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace prunevis {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes do not agree for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A computation produced or consumed a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// An argument is outside the domain of the operation (bad token id, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Configuration, checkpoint or file I/O problems.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Training diverged or failed to reach its target.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Bad command line usage.
class UsageError : public Error {
public:
    using Error::Error;
};

#define PRUNEVIS_REQUIRE(cond, ErrType, msg)                                   \
    do {                                                                       \
        if (!(cond)) throw ErrType(std::string(msg));                          \
    } while (0)

}  // namespace prunevis
