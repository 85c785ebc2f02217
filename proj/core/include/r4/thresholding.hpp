#pragma once

#include <cstdint>

#include "r4/types.hpp"

namespace r4 {

// Shipped thresholding rules. The scalar map Theta(t; lambda) must be odd,
// nondecreasing, shrinking (0 <= Theta(t) <= t for t >= 0) and unbounded.
// New rules (SCAD, MCP, ...) can be added by extending this enum and the
// switch statements in scalar_threshold / penalty_value; everything built
// on top (vector, row-wise, singular-value thresholding, the solver) only
// touches the rule through those two functions.
enum class ThresholdKind { soft, hard, hard_ridge };

struct ThresholdRule {
  ThresholdKind kind = ThresholdKind::soft;
  double lambda = 0.0;
  double eta = 0.0;  // hard_ridge shrinkage; ignored by soft/hard

  static ThresholdRule soft(double lambda) {
    return {ThresholdKind::soft, lambda, 0.0};
  }
  static ThresholdRule hard(double lambda) {
    return {ThresholdKind::hard, lambda, 0.0};
  }
  static ThresholdRule hard_ridge(double lambda, double eta) {
    return {ThresholdKind::hard_ridge, lambda, eta};
  }
};

// Penalty P_Theta, psi = t - Theta(t), and the induced robust loss
// rho(t) = int_0^|t| psi, all at a single point.
struct PenaltyEval {
  double p_theta = 0.0;
  double psi = 0.0;
  double rho = 0.0;
};

double scalar_threshold(const ThresholdRule& rule, double t);

// a * Theta(||a||_2; lambda) / ||a||_2, zero vector maps to zero.
RowVector vector_threshold(const ThresholdRule& rule, const RowVector& a);

// vector_threshold applied to every row independently.
Matrix rowwise_threshold(const ThresholdRule& rule, const Matrix& a);

// U diag(Theta(sigma_i)) V^T from the SVD of a.
Matrix matrix_singular_threshold(const ThresholdRule& rule, const Matrix& a);

// Closed-form P_Theta / psi / rho for the shipped rules.
PenaltyEval penalty_value(const ThresholdRule& rule, double t);

// |1/2 (r - Theta(r))^2 + P_Theta(Theta(r)) - int_0^|r| psi| with the
// integral done by adaptive quadrature. Property-test oracle only; the
// solver never integrates.
double verify_threshold_identity(const ThresholdRule& rule, double r);

// Quantile thresholding: keep the rho_count rows of largest l2 norm,
// scaled by 1/(1+eta); zero the rest. Norm ties are broken by a seeded
// random permutation.
Matrix quantile_threshold_rows(const Matrix& a, int rho_count, double eta,
                               std::uint64_t rng_seed);

}  // namespace r4
