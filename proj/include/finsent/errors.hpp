#pragma once

#include <stdexcept>
#include <string>

namespace finsent {

/// Malformed or schema-violating input data. Messages carry file:line
/// context where available.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration file or flag validation failure.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A design matrix (or resampled design matrix) has rank below its
/// column count at the configured tolerance.
class RankDeficientError : public std::runtime_error {
public:
    explicit RankDeficientError(const std::string& what) : std::runtime_error(what) {}
};

/// Too few observations for the requested fit or statistic.
class InsufficientDataError : public std::runtime_error {
public:
    explicit InsufficientDataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace finsent
