#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace r4 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Thrown on malformed or out-of-range user input (bad dimensions,
// non-finite entries, invalid parameter values).
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a matrix required to be SPD has an eigenvalue at or below
// the numerical tolerance.
struct NotPositiveDefinite : std::runtime_error {
  explicit NotPositiveDefinite(const std::string& msg)
      : std::runtime_error(msg) {}
};

// Linear-algebra failures that are not the caller's fault.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace r4
