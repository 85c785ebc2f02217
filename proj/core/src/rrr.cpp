#include "r4/rrr.hpp"

#include <cmath>
#include <limits>

namespace r4 {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

// First-nonzero-component-positive sign convention, so repeated fits are
// bitwise reproducible even when the eigensolver flips signs.
void fix_column_signs(Matrix& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double scale = v.col(j).cwiseAbs().maxCoeff();
    if (scale == 0.0) continue;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (std::abs(v(i, j)) > 1e-12 * scale) {
        if (v(i, j) < 0.0) v.col(j) = -v.col(j);
        break;
      }
    }
  }
}

void check_data(const RegressionData& data) {
  if (data.X.rows() != data.Y.rows()) {
    throw InvalidInput("X and Y must share their row count");
  }
  if (!all_finite(data.X) || !all_finite(data.Y)) {
    throw InvalidInput("non-finite entries in X or Y");
  }
  if (data.Gamma && (data.Gamma->rows() != data.Y.cols() ||
                     data.Gamma->cols() != data.Y.cols())) {
    throw InvalidInput("Gamma must be m x m");
  }
}

}  // namespace

DesignFactorization::DesignFactorization(const Matrix& x) {
  if (!all_finite(x)) {
    throw InvalidInput("design matrix has non-finite entries");
  }
  Eigen::BDCSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double cutoff =
      static_cast<double>(std::max(x.rows(), x.cols())) * kEps *
      (sv.size() > 0 ? sv[0] : 0.0);
  int q = 0;
  while (q < sv.size() && sv[q] > cutoff) ++q;
  rank_ = q;
  u_ = svd.matrixU().leftCols(q);
  v_ = svd.matrixV().leftCols(q);
  inv_sigma_ = sv.head(q).cwiseInverse();
}

std::pair<Matrix, Matrix> matrix_sqrt_pd(const Matrix& g) {
  if (g.rows() != g.cols()) {
    throw InvalidInput("matrix_sqrt_pd: matrix must be square");
  }
  const double scale = g.cwiseAbs().maxCoeff();
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, scale)) {
    throw InvalidInput("matrix_sqrt_pd: matrix not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(g);
  if (eig.info() != Eigen::Success) {
    throw NumericalError("matrix_sqrt_pd: eigendecomposition failed");
  }
  const Vector& ev = eig.eigenvalues();
  const double tol =
      static_cast<double>(g.rows()) * kEps * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= tol) {
    throw NotPositiveDefinite("matrix_sqrt_pd: eigenvalue at or below tolerance");
  }
  const Matrix& q = eig.eigenvectors();
  const Vector root = ev.cwiseSqrt();
  return {q * root.asDiagonal() * q.transpose(),
          q * root.cwiseInverse().asDiagonal() * q.transpose()};
}

int numerical_rank(const Matrix& a) {
  if (a.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  const double cutoff =
      static_cast<double>(std::max(a.rows(), a.cols())) * kEps *
      (sv.size() > 0 ? sv[0] : 0.0);
  int q = 0;
  while (q < sv.size() && sv[q] > cutoff) ++q;
  return q;
}

RrrFit rrr_fit(const DesignFactorization& fact, const Matrix& y, int r,
               const Matrix& gamma_half, const Matrix& gamma_half_inv) {
  const Eigen::Index m = y.cols();
  if (r < 1 || r > std::min<Eigen::Index>(m, fact.rank())) {
    throw InvalidInput("rrr_fit: rank out of [1, min(m, rank(X))]");
  }
  const bool weighted = gamma_half.size() > 0;

  // W = U' Y G^{1/2}; G^{1/2} Y' P_X Y G^{1/2} = W'W, so the leading r
  // right singular vectors of W are the required eigenvectors.
  Matrix w = fact.range_basis().transpose() * y;
  if (weighted) w *= gamma_half;
  Eigen::BDCSVD<Matrix> svd(w, Eigen::ComputeThinV);
  Matrix v = svd.matrixV().leftCols(r);
  fix_column_signs(v);

  Matrix wp = (w * v) * v.transpose();   // W P_V
  if (weighted) wp *= gamma_half_inv;
  RrrFit fit;
  fit.B_hat = fact.lstsq(fact.range_basis() * wp);
  fit.fitted = fact.range_basis() * wp;
  fit.rank = r;
  return fit;
}

RrrFit rrr_fit(const RegressionData& data, int r) {
  check_data(data);
  DesignFactorization fact(data.X);
  Matrix gh, ghi;
  if (data.Gamma) std::tie(gh, ghi) = matrix_sqrt_pd(*data.Gamma);
  return rrr_fit(fact, data.Y, r, gh, ghi);
}

RrrFit rrr_ridge_fit(const RegressionData& data, int r, double mu) {
  check_data(data);
  if (mu < 0.0) throw InvalidInput("rrr_ridge_fit: mu must be nonnegative");
  if (mu == 0.0) return rrr_fit(data, r);
  const Eigen::Index n = data.X.rows();
  const Eigen::Index p = data.X.cols();
  Matrix x_aug(n + p, p);
  x_aug.topRows(n) = data.X;
  x_aug.bottomRows(p) = std::sqrt(mu) * Matrix::Identity(p, p);
  Matrix y_aug = Matrix::Zero(n + p, data.Y.cols());
  y_aug.topRows(n) = data.Y;
  RegressionData aug{x_aug, y_aug, data.Gamma};
  RrrFit fit = rrr_fit(aug, r);
  fit.fitted = data.X * fit.B_hat;
  return fit;
}

RrrFit singular_value_shrink_fit(const RegressionData& data,
                                 const ThresholdRule& rule) {
  check_data(data);
  DesignFactorization fact(data.X);
  Matrix gh, ghi;
  if (data.Gamma) std::tie(gh, ghi) = matrix_sqrt_pd(*data.Gamma);

  Matrix z = fact.project(data.Y);
  if (data.Gamma) z *= gh;
  Matrix a = matrix_singular_threshold(rule, z);
  if (data.Gamma) a *= ghi;

  RrrFit fit;
  fit.B_hat = fact.lstsq(a);
  fit.fitted = a;  // A lies in range(X), so X B_hat = A (G^{-1/2} applied)
  fit.rank = numerical_rank(fit.B_hat);
  return fit;
}

namespace detail {
double weighted_rss(const Matrix& y, const Matrix& fitted,
                    const std::optional<Matrix>& gamma) {
  const Matrix resid = y - fitted;
  if (!gamma) return resid.squaredNorm();
  return (resid * (*gamma) * resid.transpose()).trace();
}
}  // namespace detail

}  // namespace r4
