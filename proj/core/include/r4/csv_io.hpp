#pragma once

#include <filesystem>
#include <string>

#include "r4/rrr.hpp"
#include "r4/simbench.hpp"
#include "r4/solver.hpp"
#include "r4/tuning.hpp"
#include "r4/types.hpp"

namespace r4::io {

// RFC-4180-style CSV of finite decimal numbers. A single leading header
// row is auto-detected (first row not fully numeric) and skipped. Ragged
// rows and NaN/Inf entries are rejected with row/column locations.
Matrix load_csv_matrix(const std::filesystem::path& path);

// Floats serialized with 17 significant digits so a load reproduces the
// matrix bit-exactly.
void save_csv_matrix(const Matrix& a, const std::filesystem::path& path);

// Lag design for y_t = B' y_{t-lag} + e_t: X = rows [0, T-lag),
// Y = rows [lag, T).
RegressionData build_var_design(const Matrix& series, int lag = 1);

// Per-entry squared errors with the largest trim_fraction share dropped.
double trimmed_mse(const Matrix& pred, const Matrix& actual,
                   double trim_fraction);

struct WriteOptions {
  bool timestamp = true;
};

// fit.json + B_hat.csv / C_hat.csv / outliers.csv
void write_fit(const FitResult& fit, const std::filesystem::path& out_dir,
               const WriteOptions& opts = {});

// fit artifacts for the selected cell + detection_path.csv + path.json
void write_path(const PathResult& path, const std::filesystem::path& out_dir,
                const WriteOptions& opts = {});

// simreport.csv (+ simreport.json), one row per method
void write_sim_report(const SimReport& report,
                      const std::filesystem::path& out_dir,
                      const WriteOptions& opts = {});

void write_breakdown(const std::vector<BreakdownRow>& table,
                     const std::filesystem::path& out_dir);

}  // namespace r4::io
