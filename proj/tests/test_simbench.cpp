#include <doctest.h>

#include <cmath>
#include <numeric>

#include "r4/rng.hpp"
#include "r4/simbench.hpp"

using r4::Matrix;
using r4::SimConfig;
using r4::SimModel;

namespace {

double column_sd(const Matrix& m, int j) {
  const double mean = m.col(j).mean();
  return std::sqrt((m.col(j).array() - mean).square().sum() /
                   static_cast<double>(m.rows() - 1));
}

}  // namespace

TEST_CASE("model defaults") {
  const auto a = SimConfig::defaults(SimModel::I);
  CHECK(a.n == 100);
  CHECK(a.p == 12);
  CHECK(a.m == 8);
  CHECK(a.r_star == 3);
  const auto c = SimConfig::defaults(SimModel::III);
  CHECK(c.p == 500);
  CHECK(c.m == 50);
  CHECK(c.q_latent == 10);
}

TEST_CASE("generated instance structure, model I") {
  auto cfg = SimConfig::defaults(SimModel::I);
  cfg.outlier_fraction = 0.05;
  const auto inst = r4::generate_instance(cfg, 0);
  CHECK(inst.data.X.rows() == 100);
  CHECK(inst.data.X.cols() == 12);
  CHECK(inst.data.Y.cols() == 8);
  CHECK(r4::numerical_rank(inst.B_star) == 3);

  // 5 shifted rows at the top, the rest exactly zero
  REQUIRE(inst.outlier_rows.size() == 5);
  for (int i = 0; i < 5; ++i) {
    CHECK(inst.outlier_rows[static_cast<std::size_t>(i)] == i);
    CHECK(inst.C_star.row(i).norm() > 0.0);
  }
  CHECK(inst.C_star.bottomRows(95).norm() == 0.0);

  // the shift entries are constant down each column and strictly positive
  for (int j = 0; j < 8; ++j) {
    CHECK(inst.C_star(0, j) > 0.0);
    CHECK(inst.C_star(4, j) == inst.C_star(0, j));
  }

  // two leverage rows with every predictor set to 10
  REQUIRE(inst.leverage_rows.size() == 2);
  CHECK((inst.data.X.row(0).array() == 10.0).all());
  CHECK((inst.data.X.row(1).array() == 10.0).all());

  // without the leverage modification both the shift magnitudes and the
  // noise calibration are exact functions of the (then uncontaminated)
  // signal: shift = alpha * column sd, sigma_r(XB*) = snr * ||E||_F
  auto plain = cfg;
  plain.leverage = false;
  const auto flat = r4::generate_instance(plain, 0);
  const Matrix signal = flat.data.X * flat.B_star;
  for (int j = 0; j < 8; ++j) {
    CHECK(flat.C_star(0, j) ==
          doctest::Approx(plain.alpha * column_sd(signal, j)).epsilon(1e-10));
  }
  const Matrix noise = flat.data.Y - signal - flat.C_star;
  Eigen::BDCSVD<Matrix> svd(signal);
  CHECK(svd.singularValues()(plain.r_star - 1) /
            (noise.norm()) == doctest::Approx(plain.snr).epsilon(1e-10));

  // with the leverage rows in place, the same calibration quantities are
  // inherited from the pre-modification design: the shift vector and the
  // noise matrix match the leverage-free instance exactly
  CHECK((inst.C_star - flat.C_star).norm() == 0.0);
  const Matrix lev_noise =
      inst.data.Y - inst.data.X * inst.B_star - inst.C_star;
  CHECK((lev_noise.bottomRows(95) - noise.bottomRows(95)).norm() == 0.0);

  // uncorrelated errors in this model
  const double s2 = inst.Sigma(0, 0);
  CHECK(s2 > 0.0);
  CHECK(inst.Sigma(0, 1) == 0.0);
  CHECK(inst.Sigma(3, 7) == 0.0);
}

TEST_CASE("models I and II differ only in the error covariance") {
  auto cfg1 = SimConfig::defaults(SimModel::I);
  auto cfg2 = SimConfig::defaults(SimModel::II);
  cfg1.leverage = cfg2.leverage = false;
  const auto a = r4::generate_instance(cfg1, 3);
  const auto b = r4::generate_instance(cfg2, 3);
  // the design draw is shared
  CHECK((a.data.X - b.data.X).norm() == 0.0);
  // predictors are correlated in both (off-diagonal 0.5 population value)
  auto corr = [](const Matrix& x) {
    double acc = 0.0;
    int cnt = 0;
    for (int i = 0; i < x.cols(); ++i) {
      for (int j = i + 1; j < x.cols(); ++j) {
        const double ci = (x.col(i).array() - x.col(i).mean())
                              .cwiseProduct(x.col(j).array() - x.col(j).mean())
                              .sum();
        acc += ci / ((x.rows() - 1.0) * column_sd(x, i) * column_sd(x, j));
        ++cnt;
      }
    }
    return acc / cnt;
  };
  CHECK(corr(a.data.X) > 0.35);
  // errors are correlated only in the second model
  CHECK(b.Sigma(0, 1) == doctest::Approx(0.5 * b.Sigma(0, 0)).epsilon(1e-12));
  CHECK(a.Sigma(0, 1) == 0.0);
}

TEST_CASE("model III dimensions and latent structure") {
  auto cfg = SimConfig::defaults(SimModel::III);
  cfg.outlier_fraction = 0.1;
  const auto inst = r4::generate_instance(cfg, 1);
  CHECK(inst.data.X.rows() == 100);
  CHECK(inst.data.X.cols() == 500);
  CHECK(inst.data.Y.cols() == 50);
  CHECK(inst.outlier_rows.size() == 10);
  // the design is built from 10 latent factors; the two overwritten
  // leverage rows can add at most two more directions
  CHECK(r4::numerical_rank(inst.data.X) <= 12);
  auto no_lev = cfg;
  no_lev.leverage = false;
  CHECK(r4::numerical_rank(r4::generate_instance(no_lev, 1).data.X) == 10);
}

TEST_CASE("generation is deterministic per (seed, rep) and varies across reps") {
  auto cfg = SimConfig::defaults(SimModel::I);
  const auto a = r4::generate_instance(cfg, 4);
  const auto b = r4::generate_instance(cfg, 4);
  CHECK((a.data.Y - b.data.Y).norm() == 0.0);
  CHECK((a.data.X - b.data.X).norm() == 0.0);
  const auto c = r4::generate_instance(cfg, 5);
  CHECK((a.data.Y - c.data.Y).norm() > 0.0);
  cfg.seed = 2;
  const auto d = r4::generate_instance(cfg, 4);
  CHECK((a.data.Y - d.data.Y).norm() > 0.0);
}

TEST_CASE("metric evaluation identities") {
  auto cfg = SimConfig::defaults(SimModel::I);
  const auto inst = r4::generate_instance(cfg, 2);
  const int n_kept = 98;  // two leverage rows removed

  SUBCASE("true parameters give zero errors and perfect detection") {
    const auto rec =
        r4::evaluate(inst.B_star, inst.C_star, cfg.r_star, inst);
    CHECK(rec.err_B == doctest::Approx(0.0));
    CHECK(rec.err_B_weighted == doctest::Approx(0.0));
    CHECK(rec.err_BC == doctest::Approx(0.0));
    CHECK(rec.rank == doctest::Approx(3.0));
    // the leverage rows are among the first five shifted rows, so the
    // true support flags everything
    CHECK(rec.masking == 0.0);
    CHECK(rec.swamping == 0.0);
    CHECK(rec.joint_detection == 1.0);
  }

  SUBCASE("missing a true outlier row is masking") {
    Matrix c = inst.C_star;
    c.row(2).setZero();
    const auto rec = r4::evaluate(inst.B_star, c, cfg.r_star, inst);
    // detection is scored on the non-leverage rows: 3 scored outliers
    CHECK(rec.masking == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(rec.joint_detection == 0.0);
  }

  SUBCASE("swamping counts false flags among clean rows") {
    Matrix c = inst.C_star;
    c.row(50).setConstant(1.0);
    const auto rec = r4::evaluate(inst.B_star, c, cfg.r_star, inst);
    // 95 clean rows, one flagged
    CHECK(rec.swamping == doctest::Approx(1.0 / 95.0).epsilon(1e-12));
    CHECK(rec.joint_detection == 0.0);
  }

  SUBCASE("leverage rows are excluded from the detection scores") {
    // flagging only the three non-leverage outliers is a perfect detection
    Matrix c = inst.C_star;
    c.row(0).setZero();
    c.row(1).setZero();
    auto rec = r4::evaluate(inst.B_star, c, cfg.r_star, inst);
    CHECK(rec.masking == 0.0);
    CHECK(rec.swamping == 0.0);
    CHECK(rec.joint_detection == 1.0);
  }

  SUBCASE("coefficient error matches the hand-computed norm") {
    const Matrix b = inst.B_star * 0.9;
    const auto rec = r4::evaluate(b, inst.C_star, cfg.r_star, inst);
    // rebuild the kept-rows design
    Matrix xk(n_kept, cfg.p);
    int k = 0;
    for (int i = 0; i < cfg.n; ++i) {
      if (i == 0 || i == 1) continue;
      xk.row(k++) = inst.data.X.row(i);
    }
    const Matrix diff = xk * (inst.B_star - b);
    CHECK(rec.err_B ==
          doctest::Approx(diff.squaredNorm() / (n_kept * cfg.m))
              .epsilon(1e-10));
    const Matrix w = diff * inst.Sigma.inverse() * diff.transpose();
    CHECK(rec.err_B_weighted ==
          doctest::Approx(w.trace() / (n_kept * cfg.m)).epsilon(1e-8));
  }
}

TEST_CASE("three-step comparator") {
  auto cfg = SimConfig::defaults(SimModel::I);
  cfg.leverage = false;
  const auto inst = r4::generate_instance(cfg, 6);

  SUBCASE("zero known outliers reduces to the plain fit") {
    const auto fit = r4::three_step_rro(inst.data, 3, 0);
    const auto rrr = r4::rrr_fit(inst.data, 3);
    CHECK((fit.B_hat - rrr.B_hat).norm() <= 1e-10 * (1.0 + rrr.B_hat.norm()));
    CHECK(fit.outlier_rows.empty());
  }

  SUBCASE("with the true count it flags the shifted rows") {
    const auto fit = r4::three_step_rro(inst.data, 3, 5);
    REQUIRE(fit.outlier_rows.size() == 5);
    for (int i = 0; i < 5; ++i) {
      CHECK(fit.outlier_rows[static_cast<std::size_t>(i)] == i);
    }
    // refit coefficients approximate the truth on the retained rows
    const auto rec = r4::evaluate(fit.B_hat, fit.C_hat, fit.rank, inst);
    CHECK(rec.err_B < 1.0);
  }
}

TEST_CASE("trimmed mean") {
  // fewer than ten values: no trimming
  CHECK(r4::trimmed_mean({1.0, 2.0, 3.0}) == doctest::Approx(2.0));
  // ten values: one from each tail
  std::vector<double> v;
  for (int i = 1; i <= 10; ++i) v.push_back(i);
  v[9] = 1000.0;  // would wreck the plain mean
  CHECK(r4::trimmed_mean(v) == doctest::Approx((2 + 3 + 4 + 5 + 6 + 7 + 8 + 9) / 8.0));
  // order must not matter
  std::vector<double> w = {5.0, 1.0, 4.0, 2.0, 3.0};
  CHECK(r4::trimmed_mean(w) == doctest::Approx(3.0));
}

TEST_CASE("small study runs deterministically end to end") {
  auto cfg = SimConfig::defaults(SimModel::I);
  cfg.replications = 3;
  cfg.lambda_count = 25;
  cfg.max_rank = 4;
  const std::vector<r4::SimMethod> methods = {r4::SimMethod::R4,
                                              r4::SimMethod::RRR};
  const auto a = r4::run_study(cfg, methods);
  const auto b = r4::run_study(cfg, methods);
  REQUIRE(a.rows.size() == 2);
  REQUIRE(a.per_replication.size() == 2);
  REQUIRE(a.per_replication[0].size() == 3);
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    CHECK(a.rows[k].err_B == b.rows[k].err_B);
    CHECK(a.rows[k].joint_detection == b.rows[k].joint_detection);
    CHECK(a.rows[k].avg_rank == b.rows[k].avg_rank);
    CHECK(a.rows[k].failures == 0);
    CHECK(std::isfinite(a.rows[k].err_B_se));
  }
  CHECK(r4::method_name(a.rows[0].method) == "R4");
  CHECK(r4::method_name(a.rows[1].method) == "RRR");
}

TEST_CASE("breakdown sweep: one corrupted cell breaks the plain fit only") {
  // modest clean signal so the fixed threshold cleanly separates the
  // corrupted row from everything else
  r4::Rng rng(77);
  const int n = 30, p = 4, m = 3;
  Matrix x(n, p), b1(p, 2), b2(2, m), e(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < 2; ++j) b1(i, j) = 0.05 * rng.normal();
  }
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < m; ++j) b2(i, j) = rng.normal();
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) e(i, j) = 0.01 * rng.normal();
  }
  const r4::RegressionData data{x, x * (b1 * b2) + e, std::nullopt};

  const auto rows = r4::breakdown_sweep(data, {0.0, 1e2, 1e4, 1e6}, 2, 5.0);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].magnitude == 0.0);
  // at zero corruption both estimators agree with the plain fit
  const double ref = r4::rrr_fit(data, 2).fitted.norm();
  CHECK(rows[0].rrr_norm == doctest::Approx(ref).epsilon(1e-10));
  CHECK(rows[0].r4_norm == doctest::Approx(ref).epsilon(1e-10));
  // the plain estimator tracks the corruption magnitude decade for decade;
  // the exact linear rate (100x per two decades) is approached from below
  CHECK(rows[2].rrr_norm >= 98.0 * rows[1].rrr_norm);
  CHECK(rows[3].rrr_norm >= 98.0 * rows[2].rrr_norm);
  // the robust estimator barely moves across the whole sweep
  double lo = rows[1].r4_norm, hi = rows[1].r4_norm;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    lo = std::min(lo, rows[k].r4_norm);
    hi = std::max(hi, rows[k].r4_norm);
  }
  CHECK((hi - lo) / lo < 0.01);
  CHECK(std::abs(rows[1].r4_norm - ref) / ref < 0.25);
}
