#pragma once

#include <stdexcept>
#include <string>

namespace surconfort {

/// Bad caller input: out-of-range ids, invalid knobs, malformed flags.
/// The CLI maps it to exit code 2.
class ArgumentError : public std::invalid_argument {
 public:
  explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

/// Unreadable or inconsistent input data (CSV files, checkpoints). Exit code 3.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An iterative solver failed to converge or produced non-finite values. Exit code 4.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace surconfort
