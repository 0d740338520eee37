#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace stochgall {

// Row-major so that each example's label row is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

enum class ErrorKind {
  Ingestion,   // malformed or inconsistent input files
  Parse,       // a cell that is not a number
  Validation,  // value outside its domain
  Dimension,   // shape mismatch between arguments
  Degenerate,  // e.g. a precision constraint over an all-zero signal
  Infeasible,  // strict mode only; otherwise reported as a status
  Config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stochgall
