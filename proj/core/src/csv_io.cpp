#include "r4/csv_io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace r4::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(ch);
    }
  }
  fields.push_back(field);
  for (auto& f : fields) {
    while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.erase(0, 1);
    while (!f.empty() &&
           (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) {
      f.pop_back();
    }
  }
  return fields;
}

bool parse_number(const std::string& field, double& value) {
  if (field.empty()) return false;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  return ec == std::errc{} && ptr == end;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string csv_of(const Matrix& a) {
  std::string text;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (j > 0) text += ',';
      text += format_double(a(i, j));
    }
    text += '\n';
  }
  return text;
}

nlohmann::json fit_json(const FitResult& fit, const WriteOptions& opts) {
  nlohmann::json doc;
  doc["rank"] = fit.rank;
  doc["objective"] = fit.objective;
  doc["objective_trace"] = fit.objective_trace;
  doc["iterations"] = fit.iterations;
  doc["converged"] = fit.converged;
  doc["outlier_rows"] = fit.outlier_rows;
  doc["skipped_restarts"] = fit.skipped_restarts;
  if (opts.timestamp) {
    doc["generated_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now()
                                  .time_since_epoch())
                              .count();
  }
  return doc;
}

void write_fit_files(const FitResult& fit, const std::filesystem::path& dir,
                     nlohmann::json doc) {
  save_csv_matrix(fit.B_hat, dir / "B_hat.csv");
  save_csv_matrix(fit.C_hat, dir / "C_hat.csv");
  std::string outliers = "row,norm\n";
  for (int i : fit.outlier_rows) {
    outliers += std::to_string(i) + ',' +
                format_double(fit.C_hat.row(i).norm()) + '\n';
  }
  write_text(dir / "outliers.csv", outliers);
  write_text(dir / "fit.json", doc.dump(2) + "\n");
}

}  // namespace

Matrix load_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool first_data_line = true;
  Eigen::Index width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!parse_number(fields[j], row[j])) {
        numeric = false;
        if (!first_data_line) {
          throw IoError("CSV parse failure at row " +
                             std::to_string(line_no) + ", column " +
                             std::to_string(j + 1) + " of " + path.string());
        }
        break;
      }
      if (!std::isfinite(row[j])) {
        throw IoError("non-finite value at row " +
                           std::to_string(line_no) + ", column " +
                           std::to_string(j + 1) + " of " + path.string());
      }
    }
    if (!numeric) continue;  // header row
    if (first_data_line) {
      width = static_cast<Eigen::Index>(row.size());
      first_data_line = false;
    } else if (static_cast<Eigen::Index>(row.size()) != width) {
      throw IoError("ragged CSV row at row " + std::to_string(line_no) +
                         " of " + path.string());
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError("empty CSV: " + path.string());

  Matrix out(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < width; ++j) {
      out(static_cast<Eigen::Index>(i), j) =
          rows[i][static_cast<std::size_t>(j)];
    }
  }
  return out;
}

void save_csv_matrix(const Matrix& a, const std::filesystem::path& path) {
  write_text(path, csv_of(a));
}

RegressionData build_var_design(const Matrix& series, int lag) {
  const Eigen::Index t = series.rows();
  if (lag < 1) throw InvalidInput("build_var_design: lag must be >= 1");
  if (t <= lag) throw InvalidInput("build_var_design: need more rows than lag");
  RegressionData data;
  data.X = series.topRows(t - lag);
  data.Y = series.bottomRows(t - lag);
  return data;
}

double trimmed_mse(const Matrix& pred, const Matrix& actual,
                   double trim_fraction) {
  if (pred.rows() != actual.rows() || pred.cols() != actual.cols()) {
    throw InvalidInput("trimmed_mse: shape mismatch");
  }
  if (!(trim_fraction >= 0.0 && trim_fraction < 0.5)) {
    throw InvalidInput("trimmed_mse: trim_fraction out of [0, 0.5)");
  }
  std::vector<double> errors;
  errors.reserve(static_cast<std::size_t>(pred.size()));
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    for (Eigen::Index j = 0; j < pred.cols(); ++j) {
      const double d = pred(i, j) - actual(i, j);
      errors.push_back(d * d);
    }
  }
  std::sort(errors.begin(), errors.end());
  const auto keep = errors.size() -
                    static_cast<std::size_t>(std::floor(
                        trim_fraction * static_cast<double>(errors.size())));
  double acc = 0.0;
  for (std::size_t k = 0; k < keep; ++k) acc += errors[k];
  return acc / static_cast<double>(keep);
}

void write_fit(const FitResult& fit, const std::filesystem::path& out_dir,
               const WriteOptions& opts) {
  std::filesystem::create_directories(out_dir);
  write_fit_files(fit, out_dir, fit_json(fit, opts));
}

void write_path(const PathResult& path, const std::filesystem::path& out_dir,
                const WriteOptions& opts) {
  std::filesystem::create_directories(out_dir);
  const PathCell& sel = path.selected();
  nlohmann::json doc = fit_json(sel.fit, opts);
  doc["grid_value"] = sel.grid_value;
  doc["pic"] = sel.pic;
  doc["selected_rank"] =
      path.ranks[static_cast<std::size_t>(path.selected_rank_index)];
  doc["ranks"] = path.ranks;
  doc["grid_values"] = path.grid_values;
  nlohmann::json pic_grid = nlohmann::json::array();
  for (const auto& rank_cells : path.cells) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& cell : rank_cells) {
      if (cell.valid && std::isfinite(cell.pic)) {
        row.push_back(cell.pic);
      } else {
        row.push_back(nullptr);
      }
    }
    pic_grid.push_back(row);
  }
  doc["pic_grid"] = pic_grid;
  write_fit_files(sel.fit, out_dir, doc);
  save_csv_matrix(path.detection_path, out_dir / "detection_path.csv");
}

void write_sim_report(const SimReport& report,
                      const std::filesystem::path& out_dir,
                      const WriteOptions& opts) {
  std::filesystem::create_directories(out_dir);
  std::string csv =
      "method,err_B,err_B_se,err_B_weighted,err_B_weighted_se,"
      "err_BC,err_BC_se,rank,mask,swamp,detection,failures\n";
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    csv += method_name(row.method) + ',' + format_double(row.err_B) + ',' +
           format_double(row.err_B_se) + ',' +
           format_double(row.err_B_weighted) + ',' +
           format_double(row.err_B_weighted_se) + ',' +
           format_double(row.err_BC) + ',' + format_double(row.err_BC_se) +
           ',' + format_double(row.avg_rank) + ',' +
           format_double(row.masking) + ',' + format_double(row.swamping) +
           ',' + format_double(row.joint_detection) + ',' +
           std::to_string(row.failures) + '\n';
    rows.push_back({{"method", method_name(row.method)},
                    {"err_B", row.err_B},
                    {"err_B_se", row.err_B_se},
                    {"err_B_weighted", row.err_B_weighted},
                    {"err_B_weighted_se", row.err_B_weighted_se},
                    {"err_BC", row.err_BC},
                    {"err_BC_se", row.err_BC_se},
                    {"rank", row.avg_rank},
                    {"mask", row.masking},
                    {"swamp", row.swamping},
                    {"detection", row.joint_detection},
                    {"failures", row.failures}});
  }
  write_text(out_dir / "simreport.csv", csv);
  nlohmann::json doc;
  doc["rows"] = rows;
  doc["replications"] = report.cfg.replications;
  doc["seed"] = report.cfg.seed;
  if (opts.timestamp) {
    doc["generated_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                              std::chrono::system_clock::now()
                                  .time_since_epoch())
                              .count();
  }
  write_text(out_dir / "simreport.json", doc.dump(2) + "\n");
}

void write_breakdown(const std::vector<BreakdownRow>& table,
                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::string csv = "magnitude,rrr_norm,r4_norm\n";
  for (const auto& row : table) {
    csv += format_double(row.magnitude) + ',' + format_double(row.rrr_norm) +
           ',' + format_double(row.r4_norm) + '\n';
  }
  write_text(out_dir / "breakdown.csv", csv);
}

}  // namespace r4::io
