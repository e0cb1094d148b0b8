#pragma once

#include <stdexcept>
#include <string>

namespace zinbhmm {

// Error categories map onto the CLI exit codes (2 config, 3 data, 4 numerical).

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the Cholesky factorization; carries the pivot that failed.
class NotPositiveDefinite : public NumericalError {
 public:
  explicit NotPositiveDefinite(int pivot)
      : NumericalError("matrix is not positive definite (pivot " +
                       std::to_string(pivot) + ")"),
        pivot_(pivot) {}
  int pivot() const noexcept { return pivot_; }

 private:
  int pivot_;
};

}  // namespace zinbhmm
