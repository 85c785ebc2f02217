// r4: robust reduced-rank regression command-line tool.
//
// Subcommands: fit, path, simulate, breakdown, var-design. A JSON config
// may be supplied via --config; explicit flags override config values.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "r4/csv_io.hpp"
#include "r4/rrr.hpp"
#include "r4/simbench.hpp"
#include "r4/solver.hpp"
#include "r4/tuning.hpp"
#include "r4/types.hpp"

namespace {

using r4::Matrix;

r4::ThresholdKind parse_rule(const std::string& name) {
  if (name == "soft") return r4::ThresholdKind::soft;
  if (name == "hard") return r4::ThresholdKind::hard;
  if (name == "hard_ridge") return r4::ThresholdKind::hard_ridge;
  throw r4::InvalidInput("unknown rule: " + name);
}

std::vector<int> parse_ranks(const std::string& text) {
  std::vector<int> ranks;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    for (int r = lo; r <= hi; ++r) ranks.push_back(r);
    return ranks;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma - pos);
    if (!piece.empty()) ranks.push_back(std::stoi(piece));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return ranks;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma - pos);
    if (!piece.empty()) out.push_back(std::stod(piece));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

// Expand --config FILE into "--key value" tokens placed before the real
// flags, so command-line values win.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::vector<std::string> from_config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) {
        throw r4::InvalidInput("--config requires a file path");
      }
      std::ifstream in(args[++i]);
      if (!in) throw r4::IoError("cannot open config: " + args[i]);
      nlohmann::json doc;
      try {
        in >> doc;
      } catch (const std::exception& e) {
        throw r4::InvalidInput(std::string("config parse failure: ") +
                               e.what());
      }
      for (const auto& [key, value] : doc.items()) {
        if (value.is_boolean()) {
          if (value.get<bool>()) from_config.push_back("--" + key);
        } else if (value.is_string()) {
          from_config.push_back("--" + key);
          from_config.push_back(value.get<std::string>());
        } else {
          from_config.push_back("--" + key);
          from_config.push_back(value.dump());
        }
      }
    } else {
      rest.push_back(args[i]);
    }
  }
  // Config tokens go right after the subcommand name so they bind to its
  // options; explicit flags come later and win.
  std::vector<std::string> out;
  std::size_t split = 0;
  if (!rest.empty() && rest.front().rfind("--", 0) != 0) split = 1;
  out.insert(out.end(), rest.begin(), rest.begin() + split);
  out.insert(out.end(), from_config.begin(), from_config.end());
  out.insert(out.end(), rest.begin() + split, rest.end());
  return out;
}

struct CommonIo {
  std::string x_path, y_path, gamma_path, out_dir = ".";
  bool no_timestamp = false;

  r4::RegressionData load() const {
    r4::RegressionData data;
    data.X = r4::io::load_csv_matrix(x_path);
    data.Y = r4::io::load_csv_matrix(y_path);
    if (!gamma_path.empty()) data.Gamma = r4::io::load_csv_matrix(gamma_path);
    return data;
  }
  r4::io::WriteOptions write_opts() const { return {.timestamp = !no_timestamp}; }
};

void add_common(CLI::App* cmd, CommonIo& io, bool need_xy = true) {
  auto* x = cmd->add_option("--x", io.x_path, "design matrix CSV");
  auto* y = cmd->add_option("--y", io.y_path, "response matrix CSV");
  if (need_xy) {
    x->required();
    y->required();
  }
  cmd->add_option("--gamma", io.gamma_path, "SPD weighting matrix CSV");
  cmd->add_option("--out", io.out_dir, "output directory");
  cmd->add_flag("--no-timestamp", io.no_timestamp,
                "omit timestamps from JSON outputs");
}

int run(std::vector<std::string> args) {
  CLI::App app{"robust reduced-rank regression"};
  app.require_subcommand(1);
  // Config-file tokens precede command-line flags; last value wins.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  // fit
  auto* fit_cmd = app.add_subcommand("fit", "single fit at fixed tuning");
  CommonIo fit_io;
  add_common(fit_cmd, fit_io);
  int fit_rank = 1;
  double fit_lambda = -1.0, fit_eta = 0.0;
  std::string fit_rule = "soft";
  int fit_rho = -1;
  bool fit_elementwise = false;
  int fit_multistart = 0;
  std::uint64_t fit_seed = 0;
  fit_cmd->add_option("--rank", fit_rank)->required();
  fit_cmd->add_option("--lambda", fit_lambda);
  fit_cmd->add_option("--rule", fit_rule);
  fit_cmd->add_option("--eta", fit_eta);
  fit_cmd->add_option("--rho-count", fit_rho);
  fit_cmd->add_flag("--elementwise", fit_elementwise);
  fit_cmd->add_option("--multistart", fit_multistart);
  fit_cmd->add_option("--seed", fit_seed);

  // path
  auto* path_cmd = app.add_subcommand("path", "solution path + PIC selection");
  CommonIo path_io;
  add_common(path_cmd, path_io);
  std::string path_ranks = "1..3";
  int path_grid = 100;
  double path_vmin = 0.0, path_vmax = 0.4, path_eta = 0.0;
  std::string path_rule = "hard";
  bool path_constrained = false;
  int path_multistart = 0;
  std::uint64_t path_seed = 0;
  path_cmd->add_option("--ranks", path_ranks, "e.g. 1..4 or 1,2,3");
  path_cmd->add_option("--grid", path_grid);
  path_cmd->add_option("--vmin", path_vmin);
  path_cmd->add_option("--vmax", path_vmax);
  path_cmd->add_option("--rule", path_rule);
  path_cmd->add_option("--eta", path_eta);
  path_cmd->add_flag("--constrained", path_constrained);
  path_cmd->add_option("--multistart", path_multistart);
  path_cmd->add_option("--seed", path_seed);

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "synthetic benchmark study");
  std::string sim_model = "I", sim_methods = "R4,RRR,RRS,RRO", sim_out = ".";
  double sim_contamination = 0.05, sim_alpha = 2.0, sim_snr = 0.75;
  int sim_reps = 50, sim_grid = 100, sim_max_rank = 0;
  std::uint64_t sim_seed = 1;
  bool sim_no_leverage = false, sim_no_timestamp = false;
  sim_cmd->add_option("--model", sim_model, "I, II, or III");
  sim_cmd->add_option("--contamination", sim_contamination);
  sim_cmd->add_option("--alpha", sim_alpha);
  sim_cmd->add_option("--snr", sim_snr);
  sim_cmd->add_option("--reps", sim_reps);
  sim_cmd->add_option("--grid", sim_grid);
  sim_cmd->add_option("--max-rank", sim_max_rank);
  sim_cmd->add_option("--methods", sim_methods);
  sim_cmd->add_option("--seed", sim_seed);
  sim_cmd->add_flag("--no-leverage", sim_no_leverage);
  sim_cmd->add_option("--out", sim_out);
  sim_cmd->add_flag("--no-timestamp", sim_no_timestamp);

  // breakdown
  auto* bd_cmd = app.add_subcommand("breakdown", "single-entry contamination sweep");
  CommonIo bd_io;
  add_common(bd_cmd, bd_io);
  int bd_rank = 1;
  double bd_lambda = 1.0;
  std::string bd_magnitudes = "0,1e2,1e4,1e6";
  bd_cmd->add_option("--rank", bd_rank)->required();
  bd_cmd->add_option("--lambda", bd_lambda);
  bd_cmd->add_option("--magnitudes", bd_magnitudes);

  // var-design
  auto* var_cmd = app.add_subcommand("var-design",
                                     "build a lag design from a series CSV");
  std::string var_series, var_out = ".";
  int var_lag = 1;
  var_cmd->add_option("--series", var_series)->required();
  var_cmd->add_option("--lag", var_lag);
  var_cmd->add_option("--out", var_out);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints the requested help text
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  }

  if (fit_cmd->parsed()) {
    const r4::RegressionData data = fit_io.load();
    r4::OutlierSpec spec;
    if (fit_rho >= 0) {
      spec = r4::Constrained{fit_rho, fit_eta};
    } else {
      if (fit_lambda < 0.0) {
        throw r4::InvalidInput("fit: need --lambda (with --rule) or --rho-count");
      }
      const r4::ThresholdRule rule{parse_rule(fit_rule), fit_lambda, fit_eta};
      if (fit_elementwise) {
        spec = r4::PenalizedElementwise{rule};
      } else {
        spec = r4::PenalizedRowwise{rule};
      }
    }
    r4::R4Problem problem{data, fit_rank, spec};
    r4::SolverOptions opts;
    opts.multistart = fit_multistart;
    opts.seed = fit_seed;
    const r4::FitResult fit = r4::multistart_fit(problem, opts);
    r4::io::write_fit(fit, fit_io.out_dir, fit_io.write_opts());
    std::cout << "rank=" << fit.rank << " outliers=" << fit.outlier_rows.size()
              << " objective=" << fit.objective
              << " converged=" << (fit.converged ? "yes" : "no") << "\n";
    return 0;
  }

  if (path_cmd->parsed()) {
    const r4::RegressionData data = path_io.load();
    r4::GridSpec grid;
    grid.ranks = parse_ranks(path_ranks);
    grid.lambda_count = path_grid;
    grid.v_lower = path_vmin;
    grid.v_upper = path_vmax;
    grid.constrained = path_constrained;
    grid.rule_kind = parse_rule(path_rule);
    grid.eta = path_eta;
    r4::SolverOptions opts;
    opts.multistart = path_multistart;
    opts.seed = path_seed;
    const r4::PathResult path = r4::fit_path(data, grid, opts);
    r4::io::write_path(path, path_io.out_dir, path_io.write_opts());
    const auto& sel = path.selected();
    std::cout << "selected rank="
              << path.ranks[static_cast<std::size_t>(path.selected_rank_index)]
              << " grid_value=" << sel.grid_value << " pic=" << sel.pic
              << " outliers=" << sel.fit.outlier_rows.size() << "\n";
    return 0;
  }

  if (sim_cmd->parsed()) {
    r4::SimModel model;
    if (sim_model == "I") {
      model = r4::SimModel::I;
    } else if (sim_model == "II") {
      model = r4::SimModel::II;
    } else if (sim_model == "III") {
      model = r4::SimModel::III;
    } else {
      throw r4::InvalidInput("unknown model: " + sim_model);
    }
    r4::SimConfig cfg = r4::SimConfig::defaults(model);
    cfg.outlier_fraction = sim_contamination;
    cfg.alpha = sim_alpha;
    cfg.snr = sim_snr;
    cfg.replications = sim_reps;
    cfg.seed = sim_seed;
    if (sim_no_leverage) cfg.leverage = false;
    cfg.lambda_count = sim_grid;
    cfg.max_rank = sim_max_rank;
    std::vector<r4::SimMethod> methods;
    for (std::size_t pos = 0; pos < sim_methods.size();) {
      auto comma = sim_methods.find(',', pos);
      const std::string name = sim_methods.substr(pos, comma - pos);
      if (name == "R4") {
        methods.push_back(r4::SimMethod::R4);
      } else if (name == "R4_w") {
        methods.push_back(r4::SimMethod::R4_weighted);
      } else if (name == "RRR") {
        methods.push_back(r4::SimMethod::RRR);
      } else if (name == "RRS") {
        methods.push_back(r4::SimMethod::RRS);
      } else if (name == "RRO") {
        methods.push_back(r4::SimMethod::RRO);
      } else if (!name.empty()) {
        throw r4::InvalidInput("unknown method: " + name);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    const r4::SimReport report = r4::run_study(cfg, methods);
    r4::io::write_sim_report(report, sim_out, {.timestamp = !sim_no_timestamp});
    for (const auto& row : report.rows) {
      std::cout << r4::method_name(row.method) << " err_B=" << row.err_B
                << " err_BC=" << row.err_BC << " rank=" << row.avg_rank
                << " mask=" << row.masking << " swamp=" << row.swamping
                << " detection=" << row.joint_detection << "\n";
    }
    return 0;
  }

  if (bd_cmd->parsed()) {
    const r4::RegressionData data = bd_io.load();
    const auto table = r4::breakdown_sweep(data, parse_doubles(bd_magnitudes),
                                           bd_rank, bd_lambda);
    r4::io::write_breakdown(table, bd_io.out_dir);
    for (const auto& row : table) {
      std::cout << "M=" << row.magnitude << " rrr=" << row.rrr_norm
                << " r4=" << row.r4_norm << "\n";
    }
    return 0;
  }

  // var-design
  const Matrix series = r4::io::load_csv_matrix(var_series);
  const r4::RegressionData data = r4::io::build_var_design(series, var_lag);
  std::filesystem::create_directories(var_out);
  r4::io::save_csv_matrix(data.X, std::filesystem::path(var_out) / "X.csv");
  r4::io::save_csv_matrix(data.Y, std::filesystem::path(var_out) / "Y.csv");
  std::cout << "rows=" << data.X.rows() << " lag=" << var_lag << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(expand_config(args));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;  // --help
    std::cerr << "error code=invalid_input msg=\"" << e.what() << "\"\n";
    return 2;
  } catch (const r4::InvalidInput& e) {
    std::cerr << "error code=invalid_input msg=\"" << e.what() << "\"\n";
    return 2;
  } catch (const r4::NotPositiveDefinite& e) {
    std::cerr << "error code=numerical_failure msg=\"" << e.what() << "\"\n";
    return 3;
  } catch (const r4::NumericalError& e) {
    std::cerr << "error code=numerical_failure msg=\"" << e.what() << "\"\n";
    return 3;
  } catch (const r4::IoError& e) {
    std::cerr << "error code=io_failure msg=\"" << e.what() << "\"\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error code=io_failure msg=\"" << e.what() << "\"\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error code=numerical_failure msg=\"" << e.what() << "\"\n";
    return 3;
  }
}
