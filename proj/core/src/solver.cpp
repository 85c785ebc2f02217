#include "r4/solver.hpp"

#include <algorithm>
#include <cmath>

#include "r4/rng.hpp"

namespace r4 {

namespace {

double penalty_of_c(const Matrix& c, const OutlierSpec& spec) {
  if (std::holds_alternative<Constrained>(spec)) return 0.0;
  if (const auto* row = std::get_if<PenalizedRowwise>(&spec)) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      total += penalty_value(row->rule, c.row(i).norm()).p_theta;
    }
    return total;
  }
  const auto& rule = std::get<PenalizedElementwise>(spec).rule;
  double total = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      total += penalty_value(rule, c(i, j)).p_theta;
    }
  }
  return total;
}

void check_spec(const OutlierSpec& spec, Eigen::Index n) {
  if (const auto* con = std::get_if<Constrained>(&spec)) {
    if (con->rho_count < 0 || con->rho_count > n) {
      throw InvalidInput("constrained spec: rho_count out of [0, n]");
    }
    if (con->eta < 0.0) throw InvalidInput("constrained spec: eta < 0");
  }
}

std::vector<int> nonzero_rows(const Matrix& c) {
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    if (c.row(i).norm() > 0.0) rows.push_back(static_cast<int>(i));
  }
  return rows;
}

}  // namespace

Matrix c_step(const Matrix& residual, const OutlierSpec& spec,
              std::uint64_t seed) {
  if (const auto* row = std::get_if<PenalizedRowwise>(&spec)) {
    return rowwise_threshold(row->rule, residual);
  }
  if (const auto* elem = std::get_if<PenalizedElementwise>(&spec)) {
    Matrix out(residual.rows(), residual.cols());
    for (Eigen::Index i = 0; i < residual.rows(); ++i) {
      for (Eigen::Index j = 0; j < residual.cols(); ++j) {
        out(i, j) = scalar_threshold(elem->rule, residual(i, j));
      }
    }
    return out;
  }
  const auto& con = std::get<Constrained>(spec);
  return quantile_threshold_rows(residual, con.rho_count, con.eta, seed);
}

struct R4Session::Impl {
  DesignFactorization fact;
  Matrix x;
  Matrix y_t;  // Y Gamma^{1/2} when weighted, else Y
  Matrix gamma_half, gamma_half_inv;
  bool weighted = false;

  explicit Impl(RegressionData data) : fact(data.X), x(std::move(data.X)) {
    if (x.rows() != data.Y.rows()) {
      throw InvalidInput("X and Y must share their row count");
    }
    if (!all_finite(data.Y)) throw InvalidInput("Y has non-finite entries");
    if (data.Gamma) {
      if (data.Gamma->rows() != data.Y.cols() ||
          data.Gamma->cols() != data.Y.cols()) {
        throw InvalidInput("Gamma must be m x m");
      }
      std::tie(gamma_half, gamma_half_inv) = matrix_sqrt_pd(*data.Gamma);
      weighted = true;
      y_t = data.Y * gamma_half;
    } else {
      y_t = std::move(data.Y);
    }
  }

  FitResult run(int rank, const OutlierSpec& spec, const SolverOptions& opts,
                const Matrix& fitted_init) const {
    check_spec(spec, y_t.rows());
    if (rank < 1 ||
        rank > std::min<Eigen::Index>(y_t.cols(), fact.rank())) {
      throw InvalidInput("r4_fit: rank out of [1, min(m, rank(X))]");
    }
    if (opts.max_iterations < 1 || !(opts.tolerance > 0.0)) {
      throw InvalidInput("r4_fit: need max_iterations >= 1 and tolerance > 0");
    }
    const std::uint64_t step_seed = mix64(opts.seed);

    FitResult result;
    Matrix fitted = fitted_init;
    Matrix b_t;  // coefficients in the working space
    Matrix c = Matrix::Zero(y_t.rows(), y_t.cols());
    double f_prev = 0.5 * (y_t - fitted).squaredNorm();
    result.objective_trace.push_back(f_prev);

    int iter = 0;
    for (iter = 1; iter <= opts.max_iterations; ++iter) {
      c = c_step(y_t - fitted, spec, step_seed);
      RrrFit bfit = rrr_fit(fact, y_t - c, rank, Matrix(), Matrix());
      fitted = bfit.fitted;
      b_t = std::move(bfit.B_hat);
      const double f =
          0.5 * (y_t - fitted - c).squaredNorm() + penalty_of_c(c, spec);
      result.objective_trace.push_back(f);
      if (std::abs(f_prev - f) / std::max(1.0, f_prev) < opts.tolerance) {
        f_prev = f;
        result.converged = true;
        break;
      }
      f_prev = f;
    }
    result.iterations = std::min(iter, opts.max_iterations);
    result.objective = f_prev;
    result.rank = rank;
    result.B_hat = weighted ? Matrix(b_t * gamma_half_inv) : std::move(b_t);
    result.C_hat = weighted ? Matrix(c * gamma_half_inv) : std::move(c);
    result.fitted = weighted ? Matrix(fitted * gamma_half_inv)
                             : std::move(fitted);
    result.outlier_rows = nonzero_rows(result.C_hat);
    return result;
  }

  FitResult multistart(int rank, const OutlierSpec& spec,
                       const SolverOptions& opts) const {
    FitResult best = run(rank, spec, opts, cold_fitted(rank));
    if (opts.multistart < 1) return best;
    const int n = static_cast<int>(y_t.rows());
    const int k = std::min(
        n, std::max(rank + 1, static_cast<int>(std::lround(
                                  opts.subsample_fraction * n))));
    int skipped = 0;
    for (int restart = 0; restart < opts.multistart; ++restart) {
      Rng rng(
          mix64(opts.seed ^ mix64(static_cast<std::uint64_t>(restart) + 1)));
      const std::vector<int> rows = rng.sample_without_replacement(n, k);
      Matrix x_sub(static_cast<Eigen::Index>(rows.size()), x.cols());
      Matrix y_sub(static_cast<Eigen::Index>(rows.size()), y_t.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        x_sub.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
        y_sub.row(static_cast<Eigen::Index>(i)) = y_t.row(rows[i]);
      }
      DesignFactorization sub_fact(x_sub);
      if (sub_fact.rank() < rank) {
        ++skipped;
        continue;
      }
      // Subsample RRR in the working space seeds the restart.
      RrrFit warm = rrr_fit(sub_fact, y_sub, rank, Matrix(), Matrix());
      FitResult candidate = run(rank, spec, opts, x * warm.B_hat);
      if (candidate.objective < best.objective) best = std::move(candidate);
    }
    best.skipped_restarts = skipped;
    return best;
  }

  Matrix cold_fitted(int rank) const {
    return rrr_fit(fact, y_t, rank, Matrix(), Matrix()).fitted;
  }

  Matrix fitted_from_b(const Matrix& b) const {
    Matrix fitted = x * b;
    if (weighted) fitted *= gamma_half;
    return fitted;
  }
};

R4Session::R4Session(RegressionData data)
    : impl_(std::make_unique<Impl>(std::move(data))) {}
R4Session::~R4Session() = default;
R4Session::R4Session(R4Session&&) noexcept = default;

int R4Session::design_rank() const { return impl_->fact.rank(); }
Eigen::Index R4Session::n() const { return impl_->y_t.rows(); }
Eigen::Index R4Session::m() const { return impl_->y_t.cols(); }

RrrFit R4Session::rrr(int rank) const {
  RrrFit fit = rrr_fit(impl_->fact, impl_->y_t, rank, Matrix(), Matrix());
  if (impl_->weighted) {
    fit.B_hat *= impl_->gamma_half_inv;
    fit.fitted *= impl_->gamma_half_inv;
  }
  return fit;
}

FitResult R4Session::fit(int rank, const OutlierSpec& spec,
                         const SolverOptions& opts,
                         const Matrix* b_init) const {
  const Matrix fitted_init = b_init != nullptr
                                 ? impl_->fitted_from_b(*b_init)
                                 : impl_->cold_fitted(rank);
  return impl_->run(rank, spec, opts, fitted_init);
}

Vector R4Session::residual_row_norms(const RrrFit& fit) const {
  Matrix resid = impl_->y_t - impl_->x * fit.B_hat;
  if (impl_->weighted) resid = impl_->y_t - impl_->fitted_from_b(fit.B_hat);
  Vector norms(resid.rows());
  for (Eigen::Index i = 0; i < resid.rows(); ++i) {
    norms[i] = resid.row(i).norm();
  }
  return norms;
}

FitResult r4_fit(const R4Problem& problem, const SolverOptions& opts) {
  R4Session session(problem.data);
  return session.fit(problem.rank, problem.spec, opts);
}

FitResult r4_fit(const R4Problem& problem, const SolverOptions& opts,
                 const Matrix& b_init) {
  R4Session session(problem.data);
  return session.fit(problem.rank, problem.spec, opts, &b_init);
}

double r4_objective(const R4Problem& problem, const Matrix& b,
                    const Matrix& c) {
  const Matrix* gh = nullptr;
  Matrix gamma_half, gamma_half_inv;
  if (problem.data.Gamma) {
    std::tie(gamma_half, gamma_half_inv) = matrix_sqrt_pd(*problem.data.Gamma);
    gh = &gamma_half;
  }
  Matrix resid = problem.data.Y - problem.data.X * b - c;
  Matrix c_t = c;
  if (gh != nullptr) {
    resid *= *gh;
    c_t *= *gh;
  }
  return 0.5 * resid.squaredNorm() + penalty_of_c(c_t, problem.spec);
}

double profiled_objective(const R4Problem& problem, const Matrix& b) {
  const auto* row = std::get_if<PenalizedRowwise>(&problem.spec);
  if (row == nullptr) {
    throw InvalidInput("profiled_objective requires a penalized row-wise spec");
  }
  Matrix resid = problem.data.Y - problem.data.X * b;
  if (problem.data.Gamma) {
    resid *= matrix_sqrt_pd(*problem.data.Gamma).first;
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < resid.rows(); ++i) {
    total += penalty_value(row->rule, resid.row(i).norm()).rho;
  }
  return total;
}

FitResult multistart_fit(const R4Problem& problem, const SolverOptions& opts) {
  R4Session session(problem.data);
  return session.multistart(problem.rank, problem.spec, opts);
}

FitResult R4Session::multistart(int rank, const OutlierSpec& spec,
                                const SolverOptions& opts) const {
  return impl_->multistart(rank, spec, opts);
}

}  // namespace r4
