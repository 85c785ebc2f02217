#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "r4/csv_io.hpp"
#include "r4/rng.hpp"

namespace fs = std::filesystem;
using r4::Matrix;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("r4_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

fs::path write_text(const fs::path& dir, const std::string& name,
                    const std::string& body) {
  const fs::path p = dir / name;
  std::ofstream out(p);
  out << body;
  return p;
}

}  // namespace

TEST_CASE("csv loading") {
  TempDir tmp;

  SUBCASE("plain numeric body") {
    const auto p = write_text(tmp.path, "a.csv", "1,2\n3,4\n");
    const Matrix m = r4::io::load_csv_matrix(p);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 2);
    CHECK(m(0, 0) == 1.0);
    CHECK(m(1, 1) == 4.0);
  }

  SUBCASE("header row is skipped") {
    const auto p = write_text(tmp.path, "b.csv", "x1,x2\n1.5,-2\n0,1e3\n");
    const Matrix m = r4::io::load_csv_matrix(p);
    REQUIRE(m.rows() == 2);
    CHECK(m(0, 0) == 1.5);
    CHECK(m(1, 1) == 1000.0);
  }

  SUBCASE("ragged row is an error naming the location") {
    const auto p = write_text(tmp.path, "c.csv", "1,2\n3\n");
    CHECK_THROWS_WITH_AS(r4::io::load_csv_matrix(p),
                         doctest::Contains("row 2"), r4::IoError);
  }

  SUBCASE("non-finite entries are rejected") {
    const auto p = write_text(tmp.path, "d.csv", "1,nan\n3,4\n");
    CHECK_THROWS_AS(r4::io::load_csv_matrix(p), r4::IoError);
    const auto q = write_text(tmp.path, "e.csv", "1,2\n inf,4\n");
    CHECK_THROWS_AS(r4::io::load_csv_matrix(q), r4::IoError);
  }

  SUBCASE("junk inside the body is rejected") {
    const auto p = write_text(tmp.path, "f.csv", "1,2\n3,4x\n");
    CHECK_THROWS_AS(r4::io::load_csv_matrix(p), r4::IoError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(r4::io::load_csv_matrix(tmp.path / "nope.csv"),
                    r4::IoError);
  }

  SUBCASE("empty file") {
    const auto p = write_text(tmp.path, "g.csv", "");
    CHECK_THROWS_AS(r4::io::load_csv_matrix(p), r4::IoError);
  }
}

TEST_CASE("save and load round trip is bit exact") {
  TempDir tmp;
  r4::Rng rng(3);
  Matrix m(7, 5);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 5; ++j) m(i, j) = rng.normal() * std::pow(10.0, j - 2);
  }
  m(0, 0) = 0.1;             // classic non-representable decimal
  m(1, 1) = 1.0 / 3.0;
  m(2, 2) = -0.0;
  m(3, 3) = 12345678901234567.0;
  const auto p = tmp.path / "m.csv";
  r4::io::save_csv_matrix(m, p);
  const Matrix back = r4::io::load_csv_matrix(p);
  REQUIRE(back.rows() == m.rows());
  REQUIRE(back.cols() == m.cols());
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 5; ++j) CHECK(back(i, j) == m(i, j));
  }
}

TEST_CASE("lag design construction") {
  Matrix series(4, 2);
  series << 1, 10, 2, 20, 3, 30, 4, 40;
  const auto d = r4::io::build_var_design(series, 1);
  REQUIRE(d.X.rows() == 3);
  REQUIRE(d.Y.rows() == 3);
  CHECK(d.X(0, 0) == 1.0);
  CHECK(d.Y(0, 0) == 2.0);
  CHECK(d.X(2, 1) == 30.0);
  CHECK(d.Y(2, 1) == 40.0);

  const auto d2 = r4::io::build_var_design(series, 2);
  REQUIRE(d2.X.rows() == 2);
  CHECK(d2.Y(0, 1) == 30.0);

  CHECK_THROWS_AS(r4::io::build_var_design(series, 0), r4::InvalidInput);
  CHECK_THROWS_AS(r4::io::build_var_design(series, 4), r4::InvalidInput);
}

TEST_CASE("trimmed mean squared error") {
  Matrix pred(2, 2), actual(2, 2);
  pred << 1, 2, 3, 4;
  actual << 1, 2, 3, 104;  // one wild entry
  // no trimming: (100^2) / 4
  CHECK(r4::io::trimmed_mse(pred, actual, 0.0) == doctest::Approx(2500.0));
  // 25% trimming drops exactly the wild entry
  CHECK(r4::io::trimmed_mse(pred, actual, 0.25) == doctest::Approx(0.0));
  CHECK_THROWS_AS(r4::io::trimmed_mse(pred, actual, 0.5), r4::InvalidInput);
  CHECK_THROWS_AS(r4::io::trimmed_mse(pred, Matrix::Zero(3, 2), 0.1),
                  r4::InvalidInput);
}

TEST_CASE("fit artifacts round trip") {
  TempDir tmp;
  r4::Rng rng(5);
  Matrix x(20, 3), y(20, 2);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    for (int j = 0; j < 2; ++j) y(i, j) = rng.normal();
  }
  y.row(4).array() += 30.0;
  const r4::R4Problem prob{{x, y, std::nullopt}, 1,
                           r4::PenalizedRowwise{r4::ThresholdRule::hard(8.0)}};
  const auto fit = r4::r4_fit(prob, r4::SolverOptions{});

  r4::io::WriteOptions wo;
  wo.timestamp = false;
  r4::io::write_fit(fit, tmp.path, wo);

  const Matrix b = r4::io::load_csv_matrix(tmp.path / "B_hat.csv");
  const Matrix c = r4::io::load_csv_matrix(tmp.path / "C_hat.csv");
  CHECK((b - fit.B_hat).norm() == 0.0);
  CHECK((c - fit.C_hat).norm() == 0.0);

  // outliers.csv has a header plus one line per flagged row
  std::ifstream out_file(tmp.path / "outliers.csv");
  std::string line;
  std::getline(out_file, line);
  CHECK(line == "row,norm");
  int count = 0;
  while (std::getline(out_file, line)) {
    if (!line.empty()) ++count;
  }
  CHECK(count == static_cast<int>(fit.outlier_rows.size()));

  // metadata JSON exists and is identical across repeated writes when
  // timestamps are disabled
  std::ifstream json_a(tmp.path / "fit.json");
  std::string body_a((std::istreambuf_iterator<char>(json_a)),
                     std::istreambuf_iterator<char>());
  CHECK(body_a.find("\"converged\"") != std::string::npos);
  TempDir tmp2;
  r4::io::write_fit(fit, tmp2.path, wo);
  std::ifstream json_b(tmp2.path / "fit.json");
  std::string body_b((std::istreambuf_iterator<char>(json_b)),
                     std::istreambuf_iterator<char>());
  CHECK(body_a == body_b);
}

TEST_CASE("path and report artifacts") {
  TempDir tmp;
  r4::Rng rng(7);
  Matrix x(40, 4), y(40, 3);
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 4; ++j) x(i, j) = rng.normal();
    for (int j = 0; j < 3; ++j) y(i, j) = 0.3 * rng.normal();
  }
  y += x.leftCols(2) * Matrix::Ones(2, 3);
  y.row(0).array() += 20.0;
  r4::GridSpec grid;
  grid.ranks = {1, 2};
  grid.lambda_count = 10;
  const auto path = r4::fit_path({x, y, std::nullopt}, grid,
                                 r4::SolverOptions{});
  r4::io::WriteOptions wo;
  wo.timestamp = false;
  r4::io::write_path(path, tmp.path, wo);
  CHECK(fs::exists(tmp.path / "B_hat.csv"));
  CHECK(fs::exists(tmp.path / "detection_path.csv"));
  CHECK(fs::exists(tmp.path / "fit.json"));
  std::ifstream pj(tmp.path / "fit.json");
  std::string pj_body((std::istreambuf_iterator<char>(pj)),
                      std::istreambuf_iterator<char>());
  CHECK(pj_body.find("\"selected_rank\"") != std::string::npos);
  CHECK(pj_body.find("\"pic_grid\"") != std::string::npos);
  const Matrix det = r4::io::load_csv_matrix(tmp.path / "detection_path.csv");
  CHECK(det.rows() == 40);

  auto cfg = r4::SimConfig::defaults(r4::SimModel::I);
  cfg.replications = 2;
  cfg.lambda_count = 15;
  cfg.max_rank = 4;
  const auto report = r4::run_study(cfg, {r4::SimMethod::R4});
  r4::io::write_sim_report(report, tmp.path, wo);
  std::ifstream csv(tmp.path / "simreport.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("method") != std::string::npos);
  CHECK(header.find("err_B") != std::string::npos);
  std::string row;
  std::getline(csv, row);
  CHECK(row.rfind("R4,", 0) == 0);

  r4::io::write_breakdown({{0.0, 1.0, 1.0}, {1e2, 50.0, 1.0}}, tmp.path);
  const Matrix bd = r4::io::load_csv_matrix(tmp.path / "breakdown.csv");
  REQUIRE(bd.rows() == 2);
  CHECK(bd(1, 0) == 1e2);
  CHECK(bd(1, 1) == 50.0);
}
