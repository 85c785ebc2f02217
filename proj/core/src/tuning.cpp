#include "r4/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

namespace r4 {

namespace {

constexpr double kA1 = 7.0;
constexpr double kA2 = 2.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

OutlierSpec make_spec(const GridSpec& grid, double grid_value) {
  if (grid.constrained) {
    return Constrained{static_cast<int>(std::lround(grid_value)), grid.eta};
  }
  ThresholdRule rule{grid.rule_kind, grid_value, grid.eta};
  return PenalizedRowwise{rule};
}

void check_grid(const GridSpec& grid, Eigen::Index m, int design_rank) {
  if (grid.ranks.empty()) throw InvalidInput("grid: ranks must be nonempty");
  if (grid.lambda_count < 2) throw InvalidInput("grid: lambda_count < 2");
  if (!(grid.v_lower >= 0.0 && grid.v_lower < grid.v_upper &&
        grid.v_upper <= 1.0)) {
    throw InvalidInput("grid: need 0 <= v_lower < v_upper <= 1");
  }
  for (int r : grid.ranks) {
    if (r < 1 || r > std::min<Eigen::Index>(m, design_rank)) {
      throw InvalidInput("grid: rank out of [1, min(m, rank(X))]");
    }
  }
}

int outlier_count(const R4Session& session, int rank, const GridSpec& grid,
                  double lambda, const SolverOptions& opts) {
  SolverOptions fast = opts;
  fast.multistart = 0;
  FitResult fit = session.fit(rank, make_spec(grid, lambda), fast);
  return static_cast<int>(fit.outlier_rows.size());
}

// Bisect (in log lambda) for the largest lambda whose cold-start fit flags
// at least target_fraction * n rows.
double calibrate_lambda(const R4Session& session, int rank,
                        const GridSpec& grid, double lambda_max,
                        double target_fraction, const SolverOptions& opts) {
  const double n = static_cast<double>(session.n());
  const int target = static_cast<int>(std::lround(target_fraction * n));
  if (target <= 0) return lambda_max;
  double lo_log = std::log(lambda_max) - 16.0;
  double hi_log = std::log(lambda_max);
  if (outlier_count(session, rank, grid, std::exp(lo_log), opts) < target) {
    return std::exp(lo_log);  // target fraction unreachable; use the floor
  }
  for (int iter = 0; iter < 40; ++iter) {
    const double mid_log = 0.5 * (lo_log + hi_log);
    const int j = outlier_count(session, rank, grid, std::exp(mid_log), opts);
    if (j == target) return std::exp(mid_log);
    if (j > target) {
      lo_log = mid_log;
    } else {
      hi_log = mid_log;
    }
  }
  return std::exp(lo_log);
}

}  // namespace

double pic_complexity(Eigen::Index n, Eigen::Index m, int q, int r, int j) {
  const double jm = static_cast<double>(j) * static_cast<double>(m);
  const double df = jm + static_cast<double>(m + q - r) * r;
  const double inflation =
      j > 0 ? j * std::log(std::numbers::e * static_cast<double>(n) / j) : 0.0;
  return df + inflation;
}

double pic_value(double rss, Eigen::Index n, Eigen::Index m, int q, int r,
                 int j) {
  if (rss <= 0.0) return -kInf;
  const double mn = static_cast<double>(m) * static_cast<double>(n);
  const double jm = static_cast<double>(j) * static_cast<double>(m);
  const double df_term = kA1 * (jm + static_cast<double>(m + q - r) * r);
  const double inflation =
      j > 0
          ? kA2 * j * std::log(std::numbers::e * static_cast<double>(n) / j)
          : 0.0;
  return std::log(rss) + (df_term + inflation) / mn;
}

double pic(const Matrix& y, const Matrix& x, const Matrix& b, const Matrix& c,
           int q) {
  const double rss = (y - x * b - c).squaredNorm();
  int j = 0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    if (c.row(i).norm() > 0.0) ++j;
  }
  return pic_value(rss, y.rows(), y.cols(), q, numerical_rank(b), j);
}

PathResult fit_path(const RegressionData& data, const GridSpec& grid,
                    const SolverOptions& opts) {
  R4Session session(data);
  check_grid(grid, session.m(), session.design_rank());

  PathResult path;
  path.ranks = grid.ranks;
  path.design_rank = session.design_rank();
  const Eigen::Index n = session.n();
  const Eigen::Index m = session.m();

  if (grid.constrained) {
    // rho = 0 plus log-spaced fractions up to v_upper, ascending.
    std::set<int> rho_set{0};
    const double f_lo = std::max(grid.v_lower, 1.0 / static_cast<double>(n));
    const int count = grid.lambda_count - 1;
    for (int k = 0; k < count; ++k) {
      const double t = count > 1 ? static_cast<double>(k) / (count - 1) : 1.0;
      const double f =
          std::exp(std::log(f_lo) +
                   t * (std::log(grid.v_upper) - std::log(f_lo)));
      rho_set.insert(static_cast<int>(std::lround(f * static_cast<double>(n))));
    }
    path.grid_values.assign(rho_set.begin(), rho_set.end());
  } else {
    // lambda_max: largest residual row norm of the cold RRR fit (J = 0
    // there); lambda_min: bisection targeting J/n ~ v_upper.
    const int calib_rank = grid.ranks.front();
    const Vector norms = session.residual_row_norms(session.rrr(calib_rank));
    // Small headroom so the endpoint stays above the largest residual norm
    // under floating-point reordering in the solver's cold start.
    double lambda_max = std::max(norms.maxCoeff() * (1.0 + 1e-6), 1e-12);
    if (grid.v_lower > 0.0) {
      lambda_max = calibrate_lambda(session, calib_rank, grid, lambda_max,
                                    grid.v_lower, opts);
    }
    const double lambda_min = calibrate_lambda(
        session, calib_rank, grid, lambda_max, grid.v_upper, opts);
    path.grid_values.resize(static_cast<std::size_t>(grid.lambda_count));
    const double hi = std::log(lambda_max);
    const double lo = std::log(std::min(lambda_min, lambda_max));
    for (int k = 0; k < grid.lambda_count; ++k) {
      const double t = static_cast<double>(k) / (grid.lambda_count - 1);
      path.grid_values[static_cast<std::size_t>(k)] =
          std::exp(hi + t * (lo - hi));  // descending lambda
    }
  }

  const std::size_t g_count = path.grid_values.size();
  path.cells.assign(grid.ranks.size(), std::vector<PathCell>(g_count));

  double best_pic = kInf;
  for (std::size_t ri = 0; ri < grid.ranks.size(); ++ri) {
    const int rank = grid.ranks[ri];

    // Single warm-started chain from the dense end of the grid toward the
    // sparse end. The dense anchor uses high-breakdown starts: a
    // zero-coefficient start (the first thresholding step then screens rows
    // by raw response magnitude) plus optional subsample restarts. Chains
    // anchored at the full-data reduced-rank fit instead would accommodate
    // high-leverage contaminated rows exactly and never flag them.
    const Matrix zero_b = Matrix::Zero(data.X.cols(), m);
    const Matrix* warm_b = nullptr;
    for (std::size_t gi = g_count; gi-- > 0;) {
      PathCell& cell = path.cells[ri][gi];
      cell.grid_value = path.grid_values[gi];
      const OutlierSpec spec = make_spec(grid, cell.grid_value);
      try {
        if (gi == g_count - 1) {
          // Anchor candidates: the plain cold start, the zero-coefficient
          // start (its first thresholding step screens rows by raw
          // response magnitude), and optional subsample restarts. The
          // lowest objective wins; on clean data that is the cold start,
          // under heavy or high-leverage contamination the robust starts.
          cell.fit = session.fit(rank, spec, opts, nullptr);
          try {
            FitResult zs = session.fit(rank, spec, opts, &zero_b);
            if (zs.objective < cell.fit.objective) cell.fit = std::move(zs);
          } catch (const std::exception&) {
          }
          if (opts.multistart > 0) {
            FitResult ms = session.multistart(rank, spec, opts);
            if (ms.objective < cell.fit.objective) cell.fit = std::move(ms);
          }
        } else if (gi == 0 && !grid.constrained && grid.v_lower == 0.0) {
          // The largest-lambda endpoint is calibrated to the no-outlier
          // model under a cold start; honor that semantic so the sparse
          // terminus of the path is the plain reduced-rank fit.
          cell.fit = session.fit(rank, spec, opts, nullptr);
        } else {
          cell.fit = session.fit(rank, spec, opts, warm_b);
        }
        cell.valid = true;
        warm_b = &cell.fit.B_hat;
      } catch (const std::exception&) {
        cell.valid = false;
      }
    }

    for (std::size_t gi = 0; gi < g_count; ++gi) {
      PathCell& cell = path.cells[ri][gi];
      if (!cell.valid) continue;
      const double rss =
          (data.Y - cell.fit.fitted - cell.fit.C_hat).squaredNorm();
      const int j = static_cast<int>(cell.fit.outlier_rows.size());
      const int fit_rank = numerical_rank(cell.fit.fitted);
      cell.pic = pic_value(rss, n, m, path.design_rank, fit_rank, j);
      if (!std::isfinite(cell.pic)) cell.pic = kInf;  // degenerate overfit
      const bool in_domain =
          pic_complexity(n, m, path.design_rank, fit_rank, j) <
          static_cast<double>(m) * static_cast<double>(n);
      if (in_domain && cell.pic < best_pic) {
        best_pic = cell.pic;
        path.selected_rank_index = static_cast<int>(ri);
        path.selected_grid_index = static_cast<int>(gi);
      }
    }
  }
  if (path.selected_rank_index < 0) {
    throw NumericalError("fit_path: no valid cell satisfies the criterion");
  }
  path.detection_path = detection_path_table(path);
  return path;
}

Matrix detection_path_table(const PathResult& path) {
  if (path.selected_rank_index < 0) {
    throw InvalidInput("detection_path_table: path has no selected fit");
  }
  const auto& row_cells =
      path.cells[static_cast<std::size_t>(path.selected_rank_index)];
  std::vector<const PathCell*> valid;
  for (const auto& cell : row_cells) {
    if (cell.valid) valid.push_back(&cell);
  }
  if (valid.empty()) {
    throw InvalidInput("detection_path_table: no valid fit at selected rank");
  }
  const Eigen::Index n = valid.front()->fit.C_hat.rows();
  Matrix table(n, static_cast<Eigen::Index>(valid.size()));
  for (std::size_t g = 0; g < valid.size(); ++g) {
    const Matrix& c = valid[g]->fit.C_hat;
    for (Eigen::Index i = 0; i < n; ++i) {
      table(i, static_cast<Eigen::Index>(g)) = c.row(i).norm();
    }
  }
  return table;
}

}  // namespace r4
