#include "r4/thresholding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "r4/rng.hpp"

namespace r4 {

double scalar_threshold(const ThresholdRule& rule, double t) {
  const double lambda = rule.lambda;
  const double mag = std::abs(t);
  switch (rule.kind) {
    case ThresholdKind::soft:
      return mag > lambda ? std::copysign(mag - lambda, t) : 0.0;
    case ThresholdKind::hard:
      return mag > lambda ? t : 0.0;
    case ThresholdKind::hard_ridge:
      return mag > lambda ? t / (1.0 + rule.eta) : 0.0;
  }
  return 0.0;
}

RowVector vector_threshold(const ThresholdRule& rule, const RowVector& a) {
  const double norm = a.norm();
  if (norm == 0.0) return RowVector::Zero(a.size());
  return a * (scalar_threshold(rule, norm) / norm);
}

Matrix rowwise_threshold(const ThresholdRule& rule, const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    out.row(i) = vector_threshold(rule, a.row(i));
  }
  return out;
}

Matrix matrix_singular_threshold(const ThresholdRule& rule, const Matrix& a) {
  if (!all_finite(a)) {
    throw InvalidInput("matrix_singular_threshold: non-finite entries");
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vector sv = svd.singularValues();
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    sv[i] = scalar_threshold(rule, sv[i]);
  }
  return svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
}

PenaltyEval penalty_value(const ThresholdRule& rule, double t) {
  const double lambda = rule.lambda;
  const double mag = std::abs(t);
  PenaltyEval out;
  out.psi = t - scalar_threshold(rule, t);
  switch (rule.kind) {
    case ThresholdKind::soft:
      out.p_theta = lambda * mag;
      // Huber loss.
      out.rho = mag <= lambda ? 0.5 * mag * mag
                              : lambda * mag - 0.5 * lambda * lambda;
      break;
    case ThresholdKind::hard:
      out.p_theta = mag < lambda ? -0.5 * mag * mag + lambda * mag
                                 : 0.5 * lambda * lambda;
      // Skipped-mean loss.
      out.rho = mag <= lambda ? 0.5 * mag * mag : 0.5 * lambda * lambda;
      break;
    case ThresholdKind::hard_ridge: {
      // Theta^{-1}(u) = lambda on [0, lambda/(1+eta)], (1+eta)u beyond.
      const double knot = lambda / (1.0 + rule.eta);
      if (mag <= knot) {
        out.p_theta = lambda * mag - 0.5 * mag * mag;
      } else {
        out.p_theta = lambda * knot - 0.5 * knot * knot +
                      0.5 * rule.eta * (mag * mag - knot * knot);
      }
      if (mag <= lambda) {
        out.rho = 0.5 * mag * mag;
      } else {
        out.rho = 0.5 * lambda * lambda +
                  0.5 * rule.eta / (1.0 + rule.eta) *
                      (mag * mag - lambda * lambda);
      }
      break;
    }
  }
  return out;
}

namespace {

// Adaptive Simpson on [lo, hi].
double adaptive_simpson(const ThresholdRule& rule, double lo, double hi,
                        double f_lo, double f_mid, double f_hi, double tol,
                        int depth) {
  const auto psi = [&rule](double u) {
    return u - scalar_threshold(rule, u);
  };
  const double mid = 0.5 * (lo + hi);
  const double lmid = 0.5 * (lo + mid);
  const double rmid = 0.5 * (mid + hi);
  const double f_lmid = psi(lmid);
  const double f_rmid = psi(rmid);
  const double whole = (hi - lo) / 6.0 * (f_lo + 4.0 * f_mid + f_hi);
  const double left = (mid - lo) / 6.0 * (f_lo + 4.0 * f_lmid + f_mid);
  const double right = (hi - mid) / 6.0 * (f_mid + 4.0 * f_rmid + f_hi);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(rule, lo, mid, f_lo, f_lmid, f_mid, 0.5 * tol,
                          depth - 1) +
         adaptive_simpson(rule, mid, hi, f_mid, f_rmid, f_hi, 0.5 * tol,
                          depth - 1);
}

double integrate_psi(const ThresholdRule& rule, double upper) {
  const auto psi = [&rule](double u) {
    return u - scalar_threshold(rule, u);
  };
  // psi jumps at lambda for the hard-type rules; split there.
  std::vector<double> knots{0.0};
  if (rule.lambda > 0.0 && rule.lambda < upper) knots.push_back(rule.lambda);
  knots.push_back(upper);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    const double lo = knots[k];
    const double hi = knots[k + 1];
    if (hi <= lo) continue;
    // Evaluate endpoints a hair inside the interval so the one-sided
    // limits are used at the jump.
    const double eps = 1e-14 * std::max(1.0, hi);
    const double f_lo = psi(std::min(lo + eps, hi));
    const double f_hi = psi(std::max(hi - eps, lo));
    const double f_mid = psi(0.5 * (lo + hi));
    total += adaptive_simpson(rule, lo, hi, f_lo, f_mid, f_hi, 1e-13, 48);
  }
  return total;
}

}  // namespace

double verify_threshold_identity(const ThresholdRule& rule, double r) {
  const double theta = scalar_threshold(rule, r);
  const double lhs =
      0.5 * (r - theta) * (r - theta) + penalty_value(rule, theta).p_theta;
  const double rhs = integrate_psi(rule, std::abs(r));
  return std::abs(lhs - rhs);
}

Matrix quantile_threshold_rows(const Matrix& a, int rho_count, double eta,
                               std::uint64_t rng_seed) {
  const int n = static_cast<int>(a.rows());
  if (rho_count < 0 || rho_count > n) {
    throw InvalidInput("quantile_threshold_rows: rho_count out of [0, n]");
  }
  Vector norms(n);
  for (int i = 0; i < n; ++i) norms[i] = a.row(i).norm();

  // Random permutation first, then stable sort by norm: ties are resolved
  // by the seeded permutation.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(rng_seed);
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [&norms](int i, int j) { return norms[i] > norms[j]; });

  Matrix out = Matrix::Zero(a.rows(), a.cols());
  const double scale = 1.0 / (1.0 + eta);
  for (int k = 0; k < rho_count; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    out.row(i) = a.row(i) * scale;
  }
  return out;
}

}  // namespace r4
