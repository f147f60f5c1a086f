#pragma once

#include <stdexcept>
#include <string>

namespace snps3 {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A required file could not be opened.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (bad JSON, duplicate vocab entries, wrong header).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Structurally valid input that violates a configuration invariant.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Artifacts produced against different vocabularies were combined.
class ConsistencyError : public Error {
public:
    using Error::Error;
};

/// Precondition violated by a caller-supplied argument.
class ArgumentError : public Error {
public:
    using Error::Error;
};

}  // namespace snps3
