#pragma once

#include <cstdint>
#include <memory>
#include <variant>
#include <vector>

#include "r4/rrr.hpp"
#include "r4/thresholding.hpp"
#include "r4/types.hpp"

namespace r4 {

// Outlier handling for the C-step: row-wise multivariate thresholding,
// element-wise scalar thresholding, or the row-support constraint
// ||C||_{2,0} <= rho_count (quantile thresholding).
struct PenalizedRowwise {
  ThresholdRule rule;
};
struct PenalizedElementwise {
  ThresholdRule rule;
};
struct Constrained {
  int rho_count = 0;
  double eta = 0.0;
};
using OutlierSpec =
    std::variant<PenalizedRowwise, PenalizedElementwise, Constrained>;

struct R4Problem {
  RegressionData data;
  int rank = 1;
  OutlierSpec spec;
};

struct SolverOptions {
  int max_iterations = 500;
  double tolerance = 1e-8;      // relative objective change
  int multistart = 0;           // random restarts; 0 = single cold start
  double subsample_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct FitResult {
  Matrix B_hat;                        // p x m
  Matrix C_hat;                        // n x m
  Matrix fitted;                       // X * B_hat
  int rank = 0;
  std::vector<int> outlier_rows;       // rows of C_hat with nonzero norm
  std::vector<double> objective_trace; // nonincreasing
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  int skipped_restarts = 0;
};

// One pass of Algorithm 1's step (b) for a fixed B: globally minimizes the
// C-subproblem on the given residual.
Matrix c_step(const Matrix& residual, const OutlierSpec& spec,
              std::uint64_t seed);

// Block coordinate descent: C <- threshold(Y - X B), B <- RRR(X, Y - C, r),
// until the relative objective change drops below tolerance. Cold start
// C = 0, B = RRR on the full data.
FitResult r4_fit(const R4Problem& problem, const SolverOptions& opts);

// Warm start from a given coefficient matrix.
FitResult r4_fit(const R4Problem& problem, const SolverOptions& opts,
                 const Matrix& b_init);

// Sum_i rho(||y_i - B' x_i||_2; lambda); equals the joint criterion with C
// profiled out. Requires a PenalizedRowwise spec.
double profiled_objective(const R4Problem& problem, const Matrix& b);

// Joint criterion F(B, C) for the problem's spec (RSS only when constrained).
double r4_objective(const R4Problem& problem, const Matrix& b,
                    const Matrix& c);

// Cold start plus `multistart` restarts from RRR fits on random row
// subsamples; returns the smallest-objective result.
FitResult multistart_fit(const R4Problem& problem, const SolverOptions& opts);

// Reusable fitting context: factorizes X (and Gamma) once, then serves any
// number of fits. This is the hot path for solution paths and simulations.
class R4Session {
 public:
  explicit R4Session(RegressionData data);
  ~R4Session();
  R4Session(R4Session&&) noexcept;

  int design_rank() const;
  Eigen::Index n() const;
  Eigen::Index m() const;

  RrrFit rrr(int rank) const;
  FitResult fit(int rank, const OutlierSpec& spec, const SolverOptions& opts,
                const Matrix* b_init = nullptr) const;
  // Cold start plus opts.multistart subsample restarts, best objective wins.
  FitResult multistart(int rank, const OutlierSpec& spec,
                       const SolverOptions& opts) const;

  // Row norms of Y - fitted in the (Gamma-weighted) working space; used
  // for lambda-grid calibration.
  Vector residual_row_norms(const RrrFit& fit) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace r4
