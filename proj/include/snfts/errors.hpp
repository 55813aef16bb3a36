#pragma once

#include <stdexcept>
#include <string>

namespace snfts {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument values: points outside [0,1], empty prefixes,
/// quantile levels outside (0,1), unsorted change-point fractions, ...
class DomainError : public Error {
public:
    using Error::Error;
};

/// The normal-equation matrix is singular or nearly singular
/// (reciprocal condition estimate below tolerance).
class IllConditionedError : public Error {
public:
    using Error::Error;
};

/// A prefix or segment is too short to identify the spline coefficients.
class InsufficientDataError : public Error {
public:
    using Error::Error;
};

/// Malformed CSV input; the message names the offending line.
class CsvError : public Error {
public:
    using Error::Error;
};

/// A quantile-table file is truncated or fails its invariants.
class CorruptFileError : public Error {
public:
    using Error::Error;
};

} // namespace snfts
