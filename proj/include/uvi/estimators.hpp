#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "uvi/errors.hpp"
#include "uvi/linalg.hpp"
#include "uvi/stats.hpp"
#include "uvi/var.hpp"

namespace uvi {

struct SampleMoments {
  MatrixXd s_xx;   // n^{-1} sum X_{t-1} X_{t-1}^T
  MatrixXd s_yx;   // n^{-1} sum X_t X_{t-1}^T
  int n = 0;
};

inline SampleMoments compute_moments(const VarPath& path) {
  path.validate();
  const int n = path.n();
  const int d = path.d();
  SampleMoments m;
  m.n = n;
  m.s_xx = MatrixXd::Zero(d, d);
  m.s_yx = MatrixXd::Zero(d, d);
  VectorXd prev = VectorXd::Zero(d);  // X_0
  for (int t = 0; t < n; ++t) {
    VectorXd cur = path.data.row(t).transpose();
    m.s_xx.noalias() += prev * prev.transpose();
    m.s_yx.noalias() += cur * prev.transpose();
    prev = cur;
  }
  m.s_xx /= n;
  m.s_yx /= n;
  return m;
}

struct OlsFit {
  MatrixXd gamma_hat;
  MatrixXd sigma_hat;       // residual covariance, divisor n
  MatrixXd sigma_inv_sqrt;  // sigma_hat^{-1/2}
  SampleMoments moments;
  MatrixXd residuals;       // n x d
};

inline OlsFit ols_estimate(const VarPath& path) {
  SampleMoments m = compute_moments(path);
  linalg::require_well_conditioned(m.s_xx, "ols_estimate s_xx");
  const int n = m.n;
  const int d = path.d();
  OlsFit fit;
  fit.moments = m;
  fit.gamma_hat = m.s_xx.transpose().ldlt().solve(m.s_yx.transpose()).transpose();
  fit.residuals.resize(n, d);
  VectorXd prev = VectorXd::Zero(d);
  for (int t = 0; t < n; ++t) {
    VectorXd cur = path.data.row(t).transpose();
    fit.residuals.row(t) = (cur - fit.gamma_hat * prev).transpose();
    prev = cur;
  }
  fit.sigma_hat = fit.residuals.transpose() * fit.residuals / n;
  fit.sigma_inv_sqrt = linalg::sym_inv_sqrt(fit.sigma_hat, "ols sigma_hat");
  return fit;
}

// t^2 statistic at gamma0:
//   tr( n Sigma^{-1/2} (G - g0) S_xx (G - g0)^T Sigma^{-1/2} ).
inline double t2_stat(const OlsFit& fit, const MatrixXd& gamma0) {
  if (gamma0.rows() != fit.gamma_hat.rows() || gamma0.cols() != fit.gamma_hat.cols()) {
    throw InvalidArgument("t2_stat: gamma0 dimension mismatch");
  }
  MatrixXd delta = fit.sigma_inv_sqrt * (fit.gamma_hat - gamma0);
  return fit.moments.n * (delta * fit.moments.s_xx).cwiseProduct(delta).sum();
}

inline double t2_stat(const VarPath& path, const MatrixXd& gamma0) {
  return t2_stat(ols_estimate(path), gamma0);
}

// Gradient of t2_stat in gamma0 (matrix of partials):
//   -2n Sigma^{-1} (G - g0) S_xx.
inline MatrixXd t2_stat_grad(const OlsFit& fit, const MatrixXd& gamma0) {
  MatrixXd sig_inv = fit.sigma_inv_sqrt * fit.sigma_inv_sqrt;
  return -2.0 * fit.moments.n * sig_inv * (fit.gamma_hat - gamma0) * fit.moments.s_xx;
}

struct LagAugFit {
  MatrixXd pi_hat;        // d x 2d, coefficients on (X_{t-1}, X_{t-2})
  MatrixXd gamma_hat;     // left d x d block
  MatrixXd sigma_hat;     // residual covariance, divisor n-1
  MatrixXd vcov;          // sigma_hat^{-1} kron sigma_hat, for vec(gamma_hat)
  int n_eff = 0;          // n - 1 regression rows
};

// Regress X_t on (X_{t-1}, X_{t-2}), t = 2..n; X_0 = 0. Solved by
// column-pivoted QR on the stacked design rather than normal
// equations: near unit roots the design's Gram squares an already
// large condition number, while the design itself stays comfortably
// within double precision. Full column rank is certified from the
// pivoted R diagonal.
inline LagAugFit lag_augmented_estimate(const VarPath& path) {
  path.validate();
  const int n = path.n();
  const int d = path.d();
  const int rows = n - 1;
  MatrixXd y(rows, d), w(rows, 2 * d);
  for (int t = 2; t <= n; ++t) {
    y.row(t - 2) = path.data.row(t - 1);
    w.block(t - 2, 0, 1, d) = path.data.row(t - 2);
    if (t - 3 >= 0) {
      w.block(t - 2, d, 1, d) = path.data.row(t - 3);
    } else {
      w.block(t - 2, d, 1, d).setZero();
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(w);
  VectorXd rdiag = qr.matrixQR().diagonal().head(2 * d).cwiseAbs();
  if (!(rdiag.minCoeff() > 1e-12 * rdiag.maxCoeff())) {
    throw SingularMoments("lag_augmented design: rank deficient stacked regressors");
  }
  LagAugFit fit;
  fit.n_eff = rows;
  fit.pi_hat = qr.solve(y).transpose();
  fit.gamma_hat = fit.pi_hat.leftCols(d);
  MatrixXd resid = y - w * fit.pi_hat.transpose();
  fit.sigma_hat = resid.transpose() * resid / rows;
  fit.vcov = linalg::kron(linalg::sym_inverse(fit.sigma_hat, "lag_augmented sigma_hat"),
                          fit.sigma_hat);
  return fit;
}

// Wald statistic for A vec(gamma) = b, A full row rank k:
//   n_eff (A vec - b)^T (A V A^T)^{-1} (A vec - b).
inline double wald_la(const LagAugFit& fit, const MatrixXd& a, const VectorXd& b) {
  const Eigen::Index k = a.rows();
  if (a.cols() != fit.vcov.rows() || b.size() != k) {
    throw InvalidArgument("wald_la: restriction dimension mismatch");
  }
  MatrixXd cov = a * fit.vcov * a.transpose();
  Eigen::JacobiSVD<MatrixXd> svd(a);
  if (svd.singularValues().minCoeff() <= 1e-10 * svd.singularValues().maxCoeff()) {
    throw RankDeficient("wald_la: restriction matrix not full row rank");
  }
  linalg::require_well_conditioned(cov, "wald_la A V A^T");
  VectorXd r = a * linalg::vec(fit.gamma_hat) - b;
  return fit.n_eff * r.dot(cov.ldlt().solve(r));
}

struct CoordInterval {
  double lower = 0.0;
  double upper = 0.0;
  double se = 0.0;  // asymptotic standard error of the coordinate, / sqrt(n)
};

// Per-coordinate normal interval from the lag-augmented fit.
inline CoordInterval ci_la(const LagAugFit& fit, int i, int j, double alpha) {
  const int d = static_cast<int>(fit.gamma_hat.rows());
  if (i < 0 || j < 0 || i >= d || j >= d) throw InvalidArgument("ci_la: coordinate out of range");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("ci_la: alpha must lie in (0,1)");
  MatrixXd sig_inv = linalg::sym_inverse(fit.sigma_hat, "ci_la sigma_hat");
  double var = sig_inv(j, j) * fit.sigma_hat(i, i);
  double z = stats::normal_quantile(1.0 - 0.5 * alpha);
  CoordInterval out;
  out.se = std::sqrt(var / fit.n_eff);
  out.lower = fit.gamma_hat(i, j) - z * out.se;
  out.upper = fit.gamma_hat(i, j) + z * out.se;
  return out;
}

struct IvxFit {
  MatrixXd gamma_hat;
  MatrixXd s_xz;       // n^{-1} sum X_{t-1} Z_{t-1}^T
  MatrixXd s_zz;       // n^{-1} sum Z_{t-1} Z_{t-1}^T
  MatrixXd k_matrix;   // S_xz S_zz^{-1} S_zx
  double beta = 0.0;
  int n = 0;
};

// Instrument recursion Z_t = (1 - n^{-beta}) Z_{t-1} + (X_t - X_{t-1}),
// Z_0 = 0; estimator (sum X_t Z_{t-1}^T)(sum X_{t-1} Z_{t-1}^T)^{-1}.
inline IvxFit ivx_estimate(const VarPath& path, double beta = 0.9) {
  path.validate();
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("ivx_estimate: beta must lie in (0,1)");
  const int n = path.n();
  const int d = path.d();
  const double rho = 1.0 - std::pow(static_cast<double>(n), -beta);
  MatrixXd sum_yz = MatrixXd::Zero(d, d);  // sum X_t Z_{t-1}^T
  MatrixXd sum_xz = MatrixXd::Zero(d, d);  // sum X_{t-1} Z_{t-1}^T
  MatrixXd sum_zz = MatrixXd::Zero(d, d);
  VectorXd z = VectorXd::Zero(d);     // Z_{t-1}, starts at Z_0
  VectorXd prev = VectorXd::Zero(d);  // X_{t-1}
  for (int t = 0; t < n; ++t) {
    VectorXd cur = path.data.row(t).transpose();
    sum_yz.noalias() += cur * z.transpose();
    sum_xz.noalias() += prev * z.transpose();
    sum_zz.noalias() += z * z.transpose();
    z = rho * z + (cur - prev);
    prev = cur;
  }
  IvxFit fit;
  fit.beta = beta;
  fit.n = n;
  double cg = linalg::cond_general(sum_xz);
  if (!(cg <= linalg::kCondGate)) {
    throw SingularMoments("ivx_estimate: sum X_{t-1} Z_{t-1}^T condition " + std::to_string(cg));
  }
  fit.gamma_hat = sum_xz.transpose().partialPivLu().solve(sum_yz.transpose()).transpose();
  fit.s_xz = sum_xz / n;
  fit.s_zz = sum_zz / n;
  linalg::require_well_conditioned(fit.s_zz, "ivx_estimate s_zz");
  fit.k_matrix = fit.s_xz * fit.s_zz.ldlt().solve(fit.s_xz.transpose());
  return fit;
}

// t^2 statistic at gamma0 for the instrumented estimator:
//   tr( n Sigma^{-1/2} (G - g0) K (G - g0)^T Sigma^{-1/2} ),
// K = S_xz S_zz^{-1} S_zx. Chi-square with d^2 degrees of freedom in the
// limit, uniformly over the admissible region.
inline double t2_ivx(const IvxFit& fit, const MatrixXd& sigma_hat, const MatrixXd& gamma0) {
  if (gamma0.rows() != fit.gamma_hat.rows() || gamma0.cols() != fit.gamma_hat.cols()) {
    throw InvalidArgument("t2_ivx: gamma0 dimension mismatch");
  }
  MatrixXd half = linalg::sym_inv_sqrt(sigma_hat, "t2_ivx sigma_hat");
  MatrixXd delta = half * (fit.gamma_hat - gamma0);
  return fit.n * (delta * fit.k_matrix).cwiseProduct(delta).sum();
}

}  // namespace uvi
