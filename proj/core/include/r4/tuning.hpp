#pragma once

#include <vector>

#include "r4/solver.hpp"
#include "r4/types.hpp"

namespace r4 {

// Grid over (lambda or rho_count, rank). For the penalized kind the lambda
// grid is log-spaced and calibrated so the outlier fraction J/n spans
// roughly [v_lower, v_upper]; for the constrained kind the grid is
// rho in {0} U {round(n f)} with f log-spaced in (v_lower, v_upper].
struct GridSpec {
  std::vector<int> ranks;
  int lambda_count = 100;
  double v_lower = 0.0;
  double v_upper = 0.4;
  bool constrained = false;
  ThresholdKind rule_kind = ThresholdKind::hard;
  double eta = 0.0;  // constrained-kind shrinkage
};

struct PathCell {
  FitResult fit;
  double grid_value = 0.0;  // lambda or rho_count
  double pic = 0.0;
  bool valid = false;
};

struct PathResult {
  std::vector<int> ranks;
  std::vector<double> grid_values;          // decreasing lambda / increasing rho
  std::vector<std::vector<PathCell>> cells; // [rank index][grid index]
  int selected_rank_index = -1;
  int selected_grid_index = -1;
  Matrix detection_path;                    // n x grid, ||c_i|| at selected rank
  int design_rank = 0;                      // q used by the criterion

  const PathCell& selected() const {
    return cells[static_cast<std::size_t>(selected_rank_index)]
                [static_cast<std::size_t>(selected_grid_index)];
  }
};

// Predictive information criterion,
//   log ||Y - X B - C||_F^2 + [A1 {J m + (m+q-r) r} + A2 J log(e n / J)] / (mn)
// with A1 = 7, A2 = 2, r the numerical rank of B, J the number of nonzero
// rows of C, and 0 log 0 = 0. A zero residual returns -infinity; callers
// must treat such cells as degenerate overfits.
double pic(const Matrix& y, const Matrix& x, const Matrix& b, const Matrix& c,
           int q);

// Closed form on precomputed statistics.
double pic_value(double rss, Eigen::Index n, Eigen::Index m, int q, int r,
                 int j);

// Degrees-of-freedom-plus-inflation count J m + (m+q-r) r + J log(en/J);
// the criterion's domain requires this to stay below mn.
double pic_complexity(Eigen::Index n, Eigen::Index m, int q, int r, int j);

PathResult fit_path(const RegressionData& data, const GridSpec& grid,
                    const SolverOptions& opts);

// n x (valid grid points) table of ||c_i||_2 at the selected rank.
Matrix detection_path_table(const PathResult& path);

}  // namespace r4
