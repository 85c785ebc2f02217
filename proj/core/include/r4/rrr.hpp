#pragma once

#include <optional>
#include <utility>

#include "r4/thresholding.hpp"
#include "r4/types.hpp"

namespace r4 {

// (X, Y) plus an optional SPD weighting Gamma for the response inner
// product; Gamma = identity when absent.
struct RegressionData {
  Matrix X;
  Matrix Y;
  std::optional<Matrix> Gamma;
};

struct RrrFit {
  Matrix B_hat;   // p x m
  int rank = 0;
  Matrix fitted;  // X * B_hat
};

// Thin SVD of the design with the usual numerical-rank cutoff
// max(n, p) * eps * sigma_max. Shared across fits on the same X; building
// this once is what makes solution paths and simulation sweeps cheap.
class DesignFactorization {
 public:
  explicit DesignFactorization(const Matrix& x);

  int rank() const { return rank_; }
  Eigen::Index rows() const { return u_.rows(); }
  Eigen::Index cols() const { return v_.rows(); }

  // P_X * y without materializing the n x n projection.
  Matrix project(const Matrix& y) const { return u_ * (u_.transpose() * y); }
  // Minimum-norm least-squares coefficients pinv(X) * y.
  Matrix lstsq(const Matrix& y) const {
    return v_ * (inv_sigma_.asDiagonal() * (u_.transpose() * y));
  }
  const Matrix& range_basis() const { return u_; }  // n x rank

 private:
  Matrix u_;          // n x rank
  Matrix v_;          // p x rank
  Vector inv_sigma_;  // rank
  int rank_ = 0;
};

// Symmetric square root and inverse square root of an SPD matrix, via
// eigendecomposition. Throws NotPositiveDefinite on eigenvalues at or
// below tolerance.
std::pair<Matrix, Matrix> matrix_sqrt_pd(const Matrix& g);

// Numerical rank with the same cutoff rule as DesignFactorization.
int numerical_rank(const Matrix& a);

// Classical reduced-rank regression: B = pinv(X'X) X' Y G^{1/2} P_V G^{-1/2}
// with V the leading r eigenvectors of G^{1/2} Y' P_X Y G^{1/2}.
RrrFit rrr_fit(const RegressionData& data, int r);

// Hot-path variant reusing a prebuilt factorization of data.X. gamma_half /
// gamma_half_inv may be empty (0x0) for identity weighting.
RrrFit rrr_fit(const DesignFactorization& fact, const Matrix& y, int r,
               const Matrix& gamma_half, const Matrix& gamma_half_inv);

// Ridge variant: X augmented with sqrt(mu) I_p rows, Y with zero rows.
RrrFit rrr_ridge_fit(const RegressionData& data, int r, double mu);

// Singular-value thresholding estimator: Z = P_X Y G^{1/2},
// A = Theta^sigma(Z; lambda), B = pinv(X'X) X' A G^{-1/2}.
RrrFit singular_value_shrink_fit(const RegressionData& data,
                                 const ThresholdRule& rule);

namespace detail {
// Weighted RRR objective tr{(Y - F) Gamma (Y - F)'} used by tests.
double weighted_rss(const Matrix& y, const Matrix& fitted,
                    const std::optional<Matrix>& gamma);
}  // namespace detail

}  // namespace r4
