// Copyright (c) 2026 phydiff contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace phydiff {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed container, header, or table layout.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Payload shorter than the header promises.
class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Non-numeric token where a number was required.
class ParseError : public FormatError {
public:
    using FormatError::FormatError;
};

/// Numeric argument outside its documented domain.
class ValueError : public Error {
public:
    using Error::Error;
};

/// Array dimensions incompatible with the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Index outside the valid range of a table or grid.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Configuration contradicts itself, the data, or a checkpoint.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Checkpoint written by an incompatible container version.
class VersionError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Phantom specification cannot be realized on the requested grid.
class SpecError : public Error {
public:
    using Error::Error;
};

} // namespace phydiff
