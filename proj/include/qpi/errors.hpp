#pragma once

#include <stdexcept>
#include <string>

namespace qpi {

// Error taxonomy, mirrored by the CLI exit codes:
//   UsageError   -> 1 (bad arguments, bad config, contract violations)
//   DataError    -> 2 (unreadable/malformed files, out-of-range ids)
//   NumericError -> 3 (non-finite values, diverged training)
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatches are a usage problem (caller wired tensors wrong).
class ShapeError : public UsageError {
public:
    explicit ShapeError(const std::string& msg) : UsageError(msg) {}
};

}  // namespace qpi
