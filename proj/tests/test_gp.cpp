#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uvi/gp.hpp"
#include "uvi/rng.hpp"

using uvi::GpModel;
using uvi::GpPrediction;
using uvi::MatrixXd;
using uvi::VectorXd;

namespace {

// Smooth test surfaces keyed by family index.
double surface(int family, const VectorXd& x) {
  switch (family % 3) {
    case 0: {
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s += std::sin((j + 1.0) * x[j]);
      return s;
    }
    case 1: {
      double s = 1.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s += (j + 1.0) * x[j];
      return s + 0.5 * x.squaredNorm();
    }
    default: {
      double s = 1.0;
      for (Eigen::Index j = 0; j < x.size(); ++j) s *= std::cos(0.8 * x[j]);
      return s;
    }
  }
}

MatrixXd lhs_design(int L, int p, uvi::rng::Stream& stream, double lo, double hi) {
  auto raw = uvi::rng::latin_hypercube(L, p, stream);
  MatrixXd pts(L, p);
  for (int i = 0; i < L; ++i) {
    for (int j = 0; j < p; ++j) pts(i, j) = lo + (hi - lo) * raw[i][j];
  }
  return pts;
}

GpModel fit_surface(int family, const MatrixXd& pts) {
  VectorXd y(pts.rows());
  for (Eigen::Index i = 0; i < pts.rows(); ++i) y[i] = surface(family, pts.row(i).transpose());
  return uvi::gp_fit(pts, y);
}

}  // namespace

TEST_CASE("interpolation and training-site sd invariants hold on random designs") {
  uvi::rng::Stream stream(42);
  for (int trial = 0; trial < 25; ++trial) {
    int p = 1 + static_cast<int>(stream.below(6));
    int L = p + 3 + static_cast<int>(stream.below(static_cast<std::uint64_t>(38 - p)));
    MatrixXd pts = lhs_design(L, p, stream, -1.0, 2.0);
    GpModel m = fit_surface(trial, pts);
    double sd_cap = 1e-3 * std::sqrt(m.variance);
    for (int i = 0; i < L; ++i) {
      GpPrediction pred = uvi::gp_predict(m, pts.row(i).transpose());
      double want = m.values[i];
      INFO("trial " << trial << " site " << i << " p=" << p << " L=" << L);
      CHECK(std::fabs(pred.mean - want) <= 1e-6 * (1.0 + std::fabs(want)));
      CHECK(pred.sd >= 0.0);
      CHECK(pred.sd <= sd_cap);
    }
  }
}

TEST_CASE("constant observations collapse to a constant posterior") {
  MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  VectorXd y = VectorXd::Constant(2, 3.25);
  GpModel m = uvi::gp_fit(pts, y);
  CHECK(m.constant);
  for (double x : {0.0, 0.31, 0.5, 1.0, 7.0}) {
    GpPrediction pred = uvi::gp_predict(m, VectorXd::Constant(1, x));
    CHECK(pred.mean == Catch::Approx(3.25).margin(1e-6));
    CHECK(pred.sd == 0.0);
  }
}

TEST_CASE("sine surface is recovered on a dense grid") {
  const int L = 12;
  MatrixXd pts(L, 1);
  VectorXd y(L);
  for (int i = 0; i < L; ++i) {
    pts(i, 0) = i / (L - 1.0);
    y[i] = std::sin(3.0 * pts(i, 0));
  }
  GpModel m = uvi::gp_fit(pts, y);
  double worst = 0.0;
  for (int g = 0; g <= 100; ++g) {
    double x = g / 100.0;
    GpPrediction pred = uvi::gp_predict(m, VectorXd::Constant(1, x));
    worst = std::max(worst, std::fabs(pred.mean - std::sin(3.0 * x)));
  }
  CHECK(worst < 0.05);
}

TEST_CASE("prediction reverts to the prior far from the design") {
  uvi::rng::Stream stream(7);
  MatrixXd pts = lhs_design(9, 2, stream, 0.0, 1.0);
  GpModel m = fit_surface(0, pts);
  VectorXd far = VectorXd::Constant(2, 1000.0);
  GpPrediction pred = uvi::gp_predict(m, far);
  CHECK(std::fabs(pred.mean - m.mean) < 1e-9 * (1.0 + std::fabs(m.mean)));
  CHECK(pred.sd == Catch::Approx(std::sqrt(m.variance)).epsilon(1e-9));
}

TEST_CASE("permuting the training data leaves predictions unchanged") {
  const int L = 10;
  MatrixXd pts(L, 1), rpts(L, 1);
  VectorXd y(L), ry(L);
  for (int i = 0; i < L; ++i) {
    pts(i, 0) = i / (L - 1.0);
    y[i] = std::sin(3.0 * pts(i, 0));
  }
  // Reversal plus a swap in the middle.
  std::vector<int> perm(L);
  for (int i = 0; i < L; ++i) perm[i] = L - 1 - i;
  std::swap(perm[3], perm[6]);
  for (int i = 0; i < L; ++i) {
    rpts(i, 0) = pts(perm[i], 0);
    ry[i] = y[perm[i]];
  }
  GpModel a = uvi::gp_fit(pts, y);
  GpModel b = uvi::gp_fit(rpts, ry);
  for (int g = 0; g < 9; ++g) {
    VectorXd x = VectorXd::Constant(1, 0.05 + 0.11 * g);
    GpPrediction pa = uvi::gp_predict(a, x);
    GpPrediction pb = uvi::gp_predict(b, x);
    CHECK(std::fabs(pa.mean - pb.mean) < 1e-10);
    CHECK(std::fabs(pa.sd - pb.sd) < 1e-10);
  }
}

TEST_CASE("degenerate designs are rejected") {
  MatrixXd dup(3, 2);
  dup << 0.0, 0.0, 1.0, 1.0, 1.0, 1.0 + 5e-11;
  VectorXd y(3);
  y << 0.0, 1.0, 2.0;
  CHECK_THROWS_AS(uvi::gp_fit(dup, y), uvi::DegenerateDesign);

  MatrixXd one(1, 2);
  one << 0.0, 0.0;
  CHECK_THROWS_AS(uvi::gp_fit(one, VectorXd::Constant(1, 0.0)), uvi::InvalidArgument);

  MatrixXd ok(3, 1);
  ok << 0.0, 0.5, 1.0;
  CHECK_THROWS_AS(uvi::gp_fit(ok, VectorXd::Constant(2, 0.0)), uvi::InvalidArgument);

  VectorXd bad_beta = VectorXd::Constant(3, 1.0);  // p = 1, wrong size
  VectorXd y3(3);
  y3 << 0.0, 1.0, 0.5;
  CHECK_THROWS_AS(uvi::gp_fit(ok, y3, &bad_beta), uvi::InvalidArgument);

  GpModel m = uvi::gp_fit(ok, y3);
  CHECK_THROWS_AS(uvi::gp_predict(m, VectorXd::Constant(2, 0.0)), uvi::InvalidArgument);
}

TEST_CASE("prediction gradients match finite differences") {
  uvi::rng::Stream stream(11);
  MatrixXd pts = lhs_design(15, 2, stream, -1.0, 1.0);
  GpModel m = fit_surface(1, pts);
  const double h = 1e-6;
  for (int trial = 0; trial < 6; ++trial) {
    VectorXd x(2);
    x << stream.uniform(-0.9, 0.9), stream.uniform(-0.9, 0.9);
    GpPrediction at = uvi::gp_predict_grad(m, x);
    if (at.sd < 1e-6) continue;  // sd gradient is singular at the design
    for (int j = 0; j < 2; ++j) {
      VectorXd hi = x, lo = x;
      hi[j] += h;
      lo[j] -= h;
      GpPrediction ph = uvi::gp_predict(m, hi);
      GpPrediction pl = uvi::gp_predict(m, lo);
      double dmean = (ph.mean - pl.mean) / (2.0 * h);
      double dsd = (ph.sd - pl.sd) / (2.0 * h);
      CHECK(at.dmean[j] == Catch::Approx(dmean).margin(1e-5).epsilon(1e-4));
      CHECK(at.dsd[j] == Catch::Approx(dsd).margin(1e-5).epsilon(1e-4));
    }
  }
}

TEST_CASE("expected improvement composes the two factors") {
  MatrixXd pts(6, 1);
  VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    pts(i, 0) = 0.2 * i;
    y[i] = std::sin(3.0 * pts(i, 0));
  }
  GpModel m = uvi::gp_fit(pts, y);
  VectorXd x = VectorXd::Constant(1, 0.37);
  GpPrediction pred = uvi::gp_predict(m, x);
  REQUIRE(pred.sd > 0.0);

  // No objective improvement, no reward.
  CHECK(uvi::expected_improvement(m, x, 1.0, 0.0, 1.0) == 0.0);
  CHECK(uvi::expected_improvement(m, x, 0.5, 0.0, 1.0) == 0.0);

  // Constraint value pinned at the posterior mean halves the reward.
  double u = 0.7;
  CHECK(uvi::expected_improvement(m, x, 1.0 + u, pred.mean, 1.0) ==
        Catch::Approx(0.5 * u).epsilon(1e-15));

  // Ten posterior sds of slack makes the feasibility factor vanish into 1.
  double ei = uvi::expected_improvement(m, x, 1.0 + u, pred.mean - 10.0 * pred.sd, 1.0);
  CHECK(std::fabs(ei - u) < 1e-10 * u);

  // Deep infeasibility kills it.
  CHECK(uvi::expected_improvement(m, x, 1.0 + u, pred.mean + 10.0 * pred.sd, 1.0) < 1e-10);

  // Degenerate sd turns the factor into a feasibility indicator.
  GpModel flat = uvi::gp_fit(pts, VectorXd::Constant(6, 2.0));
  REQUIRE(flat.constant);
  CHECK(uvi::expected_improvement(flat, x, 2.0, 1.5, 1.0) == 1.0);
  CHECK(uvi::expected_improvement(flat, x, 2.0, 2.5, 1.0) == 0.0);
}
