#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uvi/estimators.hpp"
#include "uvi/var.hpp"

using uvi::MatrixXd;
using uvi::VarPath;
using uvi::VectorXd;

namespace {

VarPath scalar_path(std::initializer_list<double> xs) {
  VarPath p;
  p.data.resize(static_cast<Eigen::Index>(xs.size()), 1);
  int t = 0;
  for (double x : xs) p.data(t++, 0) = x;
  return p;
}

VarPath simulate(const MatrixXd& gamma, const MatrixXd& sigma, int n, std::uint64_t seed) {
  uvi::ModelParams p;
  p.gamma = gamma;
  p.sigma = sigma;
  return uvi::simulate_var(p, n, uvi::ErrorSpec::gaussian_errors(), seed);
}

}  // namespace

TEST_CASE("scalar ols matches the hand-expanded sums") {
  // With X_0 = 0: gamma_hat = sum x_t x_{t-1} / sum x_{t-1}^2.
  VarPath p = scalar_path({1.0, 2.0, 5.0, 4.0});
  uvi::OlsFit fit = uvi::ols_estimate(p);
  double want = (1.0 * 2.0 + 2.0 * 5.0 + 5.0 * 4.0) / (1.0 + 4.0 + 25.0);
  CHECK(fit.gamma_hat(0, 0) == Catch::Approx(want).epsilon(1e-14));
  CHECK(fit.moments.s_xx(0, 0) == Catch::Approx((1.0 + 4.0 + 25.0) / 4.0).epsilon(1e-14));

  // The two-observation variant of the same identity is blocked by the
  // minimum-sample gate rather than silently computed.
  CHECK_THROWS_AS(uvi::ols_estimate(scalar_path({1.0, 2.0})), uvi::AssumptionViolation);
}

TEST_CASE("ols residuals are orthogonal to the regressors") {
  VarPath p = simulate(0.6 * MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3), 400, 2);
  uvi::OlsFit fit = uvi::ols_estimate(p);
  MatrixXd cross = MatrixXd::Zero(3, 3);
  VectorXd prev = VectorXd::Zero(3);
  for (int t = 0; t < p.n(); ++t) {
    cross += fit.residuals.row(t).transpose() * prev.transpose();
    prev = p.data.row(t).transpose();
  }
  CHECK(cross.cwiseAbs().maxCoeff() < 1e-8 * fit.moments.s_xx.norm() * p.n());
}

TEST_CASE("ols is consistent for white noise") {
  VarPath p = simulate(MatrixXd::Zero(1, 1), MatrixXd::Identity(1, 1), 10000, 31);
  uvi::OlsFit fit = uvi::ols_estimate(p);
  CHECK(std::fabs(fit.gamma_hat(0, 0)) < 0.05);
}

TEST_CASE("ols is a pure function of the path") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 200, 8);
  uvi::OlsFit a = uvi::ols_estimate(p);
  uvi::OlsFit b = uvi::ols_estimate(p);
  CHECK((a.gamma_hat.array() == b.gamma_hat.array()).all());
  CHECK((a.sigma_hat.array() == b.sigma_hat.array()).all());
}

TEST_CASE("t2 statistic vanishes only at the estimate") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 300, 4);
  uvi::OlsFit fit = uvi::ols_estimate(p);
  CHECK(uvi::t2_stat(fit, fit.gamma_hat) <= 1e-10);
  MatrixXd off = fit.gamma_hat;
  off(0, 1) += 0.05;
  CHECK(uvi::t2_stat(fit, off) > 1e-3);
  CHECK(uvi::t2_stat(p, off) == Catch::Approx(uvi::t2_stat(fit, off)));
  CHECK_THROWS_AS(uvi::t2_stat(fit, MatrixXd::Zero(3, 3)), uvi::InvalidArgument);
}

TEST_CASE("scalar t2 closed form") {
  VarPath p = simulate(0.8 * MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), 500, 5);
  uvi::OlsFit fit = uvi::ols_estimate(p);
  for (double g0 : {0.0, 0.5, 0.8, 1.0}) {
    MatrixXd gamma0 = g0 * MatrixXd::Identity(1, 1);
    double diff = fit.gamma_hat(0, 0) - g0;
    double want = p.n() * diff * diff * fit.moments.s_xx(0, 0) / fit.sigma_hat(0, 0);
    CHECK(uvi::t2_stat(fit, gamma0) == Catch::Approx(want).epsilon(1e-12));
    CHECK(uvi::t2_stat(fit, gamma0) >= 0.0);
  }
}

TEST_CASE("t2 statistic is rotation invariant") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 300, 12);
  double theta = 0.7;
  MatrixXd q(2, 2);
  q << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  MatrixXd gamma0 = MatrixXd::Identity(2, 2) * 0.4;
  gamma0(0, 1) = 0.1;

  VarPath rotated;
  rotated.data = p.data * q.transpose();
  double orig = uvi::t2_stat(p, gamma0);
  double rot = uvi::t2_stat(rotated, q * gamma0 * q.transpose());
  CHECK(rot == Catch::Approx(orig).epsilon(1e-8));
}

TEST_CASE("t2 gradient matches finite differences") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 200, 21);
  uvi::OlsFit fit = uvi::ols_estimate(p);
  MatrixXd gamma0(2, 2);
  gamma0 << 0.4, 0.1, -0.2, 0.6;
  MatrixXd grad = uvi::t2_stat_grad(fit, gamma0);
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      MatrixXd up = gamma0, dn = gamma0;
      up(i, j) += h;
      dn(i, j) -= h;
      double fd = (uvi::t2_stat(fit, up) - uvi::t2_stat(fit, dn)) / (2.0 * h);
      CHECK(grad(i, j) == Catch::Approx(fd).epsilon(1e-5).margin(1e-5));
    }
  }
}

TEST_CASE("lag-augmented fit agrees with brute-force least squares") {
  const int n = 150, d = 2;
  VarPath p = simulate(0.5 * MatrixXd::Identity(d, d), MatrixXd::Identity(d, d), n, 17);
  uvi::LagAugFit fit = uvi::lag_augmented_estimate(p);
  CHECK(fit.n_eff == n - 1);
  CHECK((fit.gamma_hat.array() == fit.pi_hat.leftCols(d).array()).all());

  // Normal equations solved independently with a dense inverse.
  MatrixXd y(n - 1, d), w(n - 1, 2 * d);
  for (int t = 2; t <= n; ++t) {
    y.row(t - 2) = p.data.row(t - 1);
    w.block(t - 2, 0, 1, d) = p.data.row(t - 2);
    if (t >= 3) {
      w.block(t - 2, d, 1, d) = p.data.row(t - 3);
    } else {
      w.block(t - 2, d, 1, d).setZero();
    }
  }
  MatrixXd pi_brute = (w.transpose() * w).fullPivLu().solve(w.transpose() * y).transpose();
  CHECK((fit.pi_hat - pi_brute).cwiseAbs().maxCoeff() < 1e-8);

  MatrixXd resid = y - w * fit.pi_hat.transpose();
  MatrixXd sigma_brute = resid.transpose() * resid / (n - 1);
  CHECK((fit.sigma_hat - sigma_brute).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lag augmentation is consistent in the stationary regime") {
  MatrixXd gamma = 0.5 * MatrixXd::Identity(2, 2);
  VarPath p = simulate(gamma, MatrixXd::Identity(2, 2), 10000, 23);
  uvi::LagAugFit fit = uvi::lag_augmented_estimate(p);
  CHECK((fit.gamma_hat - gamma).norm() < 0.05);
}

TEST_CASE("lag augmentation survives a pure random walk") {
  VarPath p = simulate(MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 500, 29);
  uvi::LagAugFit fit = uvi::lag_augmented_estimate(p);
  // Near unit roots the estimate stays in a root-n neighborhood.
  CHECK((fit.gamma_hat - MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.5);
}

TEST_CASE("wald statistic basics") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 300, 33);
  uvi::LagAugFit fit = uvi::lag_augmented_estimate(p);
  VectorXd vec_gamma = uvi::linalg::vec(fit.gamma_hat);

  // Restriction satisfied exactly at the estimate.
  MatrixXd a1 = MatrixXd::Zero(1, 4);
  a1(0, 2) = 1.0;  // coordinate (0,1) under column stacking
  VectorXd b1(1);
  b1 << vec_gamma[2];
  CHECK(uvi::wald_la(fit, a1, b1) <= 1e-10);

  // One-dimensional restriction equals the squared studentized coordinate.
  b1[0] = 0.0;
  uvi::CoordInterval ci = uvi::ci_la(fit, 0, 1, 0.05);
  double z = fit.gamma_hat(0, 1) / ci.se;
  CHECK(uvi::wald_la(fit, a1, b1) == Catch::Approx(z * z).epsilon(1e-10));

  // Joint restriction at the estimate is zero; away from it positive.
  MatrixXd a4 = MatrixXd::Identity(4, 4);
  CHECK(uvi::wald_la(fit, a4, vec_gamma) <= 1e-10);
  CHECK(uvi::wald_la(fit, a4, VectorXd::Zero(4)) > 0.0);

  // Rank-deficient restrictions are rejected.
  MatrixXd dup(2, 4);
  dup.row(0) = a1.row(0);
  dup.row(1) = a1.row(0);
  CHECK_THROWS_AS(uvi::wald_la(fit, dup, VectorXd::Zero(2)), uvi::RankDeficient);
  CHECK_THROWS_AS(uvi::wald_la(fit, a1, VectorXd::Zero(2)), uvi::InvalidArgument);
}

TEST_CASE("ci_la interval follows the closed form") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 400, 41);
  uvi::LagAugFit fit = uvi::lag_augmented_estimate(p);
  uvi::CoordInterval ci = uvi::ci_la(fit, 1, 0, 0.05);

  MatrixXd sig_inv = uvi::linalg::sym_inverse(fit.sigma_hat, "test");
  double se = std::sqrt(sig_inv(0, 0) * fit.sigma_hat(1, 1) / fit.n_eff);
  CHECK(ci.se == Catch::Approx(se).epsilon(1e-12));
  CHECK(ci.upper - ci.lower == Catch::Approx(2.0 * 1.959963984540054 * se).epsilon(1e-9));
  CHECK(ci.lower <= fit.gamma_hat(1, 0));
  CHECK(ci.upper >= fit.gamma_hat(1, 0));

  // Width shrinks monotonically toward the alpha -> 1 point-estimate limit.
  double w_mid = uvi::ci_la(fit, 1, 0, 0.5).upper - uvi::ci_la(fit, 1, 0, 0.5).lower;
  double w_tight = uvi::ci_la(fit, 1, 0, 0.9999).upper - uvi::ci_la(fit, 1, 0, 0.9999).lower;
  double w_wide = uvi::ci_la(fit, 1, 0, 0.01).upper - uvi::ci_la(fit, 1, 0, 0.01).lower;
  CHECK(w_tight < w_mid);
  CHECK(w_mid < w_wide);
  CHECK(w_tight < 1e-3 * se);

  CHECK_THROWS_AS(uvi::ci_la(fit, 2, 0, 0.05), uvi::InvalidArgument);
  CHECK_THROWS_AS(uvi::ci_la(fit, 0, 0, 0.0), uvi::InvalidArgument);
}

TEST_CASE("ivx instrument moments match a hand recursion") {
  VarPath p = scalar_path({1.0, -2.0, 3.0, 0.5, 1.5, -1.0});
  const double beta = 0.7;
  uvi::IvxFit fit = uvi::ivx_estimate(p, beta);

  const int n = 6;
  const double rho = 1.0 - std::pow(static_cast<double>(n), -beta);
  // Z_0 = 0 and Z_1 = X_1 by the recursion with X_0 = 0.
  std::vector<double> z(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> x{0.0, 1.0, -2.0, 3.0, 0.5, 1.5, -1.0};  // x[t] = X_t
  for (int t = 1; t <= n; ++t) z[static_cast<std::size_t>(t)] = rho * z[t - 1] + x[t] - x[t - 1];
  CHECK(z[1] == Catch::Approx(x[1]).margin(1e-15));

  double sum_yz = 0.0, sum_xz = 0.0, sum_zz = 0.0;
  for (int t = 1; t <= n; ++t) {
    sum_yz += x[t] * z[t - 1];
    sum_xz += x[t - 1] * z[t - 1];
    sum_zz += z[t - 1] * z[t - 1];
  }
  CHECK(fit.gamma_hat(0, 0) == Catch::Approx(sum_yz / sum_xz).epsilon(1e-12));
  CHECK(fit.s_xz(0, 0) == Catch::Approx(sum_xz / n).epsilon(1e-12));
  CHECK(fit.s_zz(0, 0) == Catch::Approx(sum_zz / n).epsilon(1e-12));
  CHECK(fit.k_matrix(0, 0) ==
        Catch::Approx((sum_xz / n) * (sum_xz / n) / (sum_zz / n)).epsilon(1e-12));

  CHECK_THROWS_AS(uvi::ivx_estimate(p, 0.0), uvi::InvalidArgument);
  CHECK_THROWS_AS(uvi::ivx_estimate(p, 1.0), uvi::InvalidArgument);
}

TEST_CASE("ivx estimator is consistent in the stationary regime") {
  MatrixXd gamma = 0.5 * MatrixXd::Identity(2, 2);
  VarPath p = simulate(gamma, MatrixXd::Identity(2, 2), 10000, 47);
  uvi::IvxFit fit = uvi::ivx_estimate(p, 0.9);
  CHECK((fit.gamma_hat - gamma).norm() < 0.05);
}

TEST_CASE("ivx t2 statistic is a centered nonnegative quadratic") {
  VarPath p = simulate(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2), 400, 53);
  uvi::OlsFit ols = uvi::ols_estimate(p);
  uvi::IvxFit fit = uvi::ivx_estimate(p, 0.9);
  CHECK(uvi::t2_ivx(fit, ols.sigma_hat, fit.gamma_hat) == Catch::Approx(0.0).margin(1e-12));
  uvi::rng::Stream s(1);
  for (int k = 0; k < 20; ++k) {
    MatrixXd g0(2, 2);
    for (int i = 0; i < 4; ++i) g0(i / 2, i % 2) = s.uniform(-1.0, 1.0);
    CHECK(uvi::t2_ivx(fit, ols.sigma_hat, g0) >= 0.0);
  }
  CHECK_THROWS_AS(uvi::t2_ivx(fit, ols.sigma_hat, MatrixXd::Zero(3, 3)), uvi::InvalidArgument);
}

TEST_CASE("scalar ivx t2 closed form") {
  VarPath p = simulate(0.9 * MatrixXd::Identity(1, 1), MatrixXd::Identity(1, 1), 500, 59);
  uvi::OlsFit ols = uvi::ols_estimate(p);
  uvi::IvxFit fit = uvi::ivx_estimate(p, 0.9);
  for (double g0 : {0.5, 0.9, 1.0}) {
    double diff = fit.gamma_hat(0, 0) - g0;
    double k = fit.s_xz(0, 0) * fit.s_xz(0, 0) / fit.s_zz(0, 0);
    double want = p.n() * diff * diff * k / ols.sigma_hat(0, 0);
    CHECK(uvi::t2_ivx(fit, ols.sigma_hat, g0 * MatrixXd::Identity(1, 1)) ==
          Catch::Approx(want).epsilon(1e-10));
  }
}
