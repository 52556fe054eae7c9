#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "uvi/errors.hpp"
#include "uvi/linalg.hpp"
#include "uvi/rng.hpp"
#include "uvi/stats.hpp"
#include "uvi/var.hpp"

namespace uvi {

struct QuantileRequest {
  MatrixXd gamma;
  MatrixXd sigma;
  int n = 0;
  double level = 0.95;
  int B = 999;
  std::uint64_t seed = 0;

  void validate() const {
    if (gamma.rows() < 1 || gamma.rows() != gamma.cols()) {
      throw InvalidArgument("QuantileRequest: gamma must be square");
    }
    if (sigma.rows() != gamma.rows() || sigma.cols() != gamma.cols()) {
      throw InvalidArgument("QuantileRequest: sigma dimension mismatch");
    }
    if (n < 2) throw InvalidArgument("QuantileRequest: n too small");
    if (B < 99) throw InvalidArgument("QuantileRequest: need B >= 99");
    if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("QuantileRequest: level in (0,1)");
  }
};

// Frozen block of B*n*d standard normal deviates, keyed by
// (seed, B, n, d). Reusing the block across candidate gamma makes the
// simulated quantile a smooth function of gamma, which the surrogate
// optimizer relies on. Optionally cached on disk (UVI_CACHE_DIR).
class QuantileSession {
 public:
  QuantileSession(int n, int d, int B, std::uint64_t seed)
      : n_(n), d_(d), B_(B), seed_(seed) {
    if (n < 2 || d < 1 || B < 99) throw InvalidArgument("QuantileSession: bad shape");
    const char* dir = std::getenv("UVI_CACHE_DIR");
    if (dir != nullptr && load_cache(dir)) return;
    rng::Stream stream = rng::Stream(seed).substream("quantile-deviates");
    deviates_.resize(static_cast<Eigen::Index>(B) * n, d);
    for (Eigen::Index i = 0; i < deviates_.rows(); ++i) {
      for (int j = 0; j < d; ++j) deviates_(i, j) = stream.normal();
    }
    if (dir != nullptr) save_cache(dir);
  }

  int n() const { return n_; }
  int d() const { return d_; }
  int B() const { return B_; }
  std::uint64_t seed() const { return seed_; }

  // One Gaussian-replica statistic per deviate block:
  //   Y_t = gamma Y_{t-1} + e_t, e_t = sigma_hat^{1/2} xi_t,
  //   stat = n tr( Sigma^{-1/2} S_eY S_YY^{-1} S_eY^T Sigma^{-1/2} ).
  // Replicas whose S_YY fails the condition gate are redrawn from a
  // dedicated stream; more than 1% redraws aborts.
  std::vector<double> tilde_samples(const MatrixXd& gamma, const MatrixXd& sigma_hat) const {
    if (gamma.rows() != d_ || gamma.cols() != d_ || sigma_hat.rows() != d_ ||
        sigma_hat.cols() != d_) {
      throw InvalidArgument("tilde_samples: dimension mismatch");
    }
    MatrixXd root = linalg::sym_sqrt(sigma_hat, "tilde sigma_hat");
    MatrixXd inv_root = linalg::sym_inv_sqrt(sigma_hat, "tilde sigma_hat");
    std::vector<double> out(static_cast<std::size_t>(B_));
    int redraws = 0;
    rng::Stream redraw_stream = rng::Stream(seed_).substream("quantile-redraw");
    MatrixXd block(n_, d_);
    for (int b = 0; b < B_; ++b) {
      double stat;
      bool ok = replica_stat(gamma, root, inv_root,
                             deviates_.middleRows(static_cast<Eigen::Index>(b) * n_, n_), &stat);
      int tries = 0;
      while (!ok && tries < 8) {
        ++tries;
        for (int t = 0; t < n_; ++t) {
          for (int j = 0; j < d_; ++j) block(t, j) = redraw_stream.normal();
        }
        ok = replica_stat(gamma, root, inv_root, block, &stat);
      }
      if (!ok) throw DegenerateReplications("tilde_samples: replica unrecoverable");
      if (tries > 0) ++redraws;
      out[static_cast<std::size_t>(b)] = stat;
    }
    if (redraws * 100 > B_) {
      throw DegenerateReplications("tilde_samples: more than 1% of replicas redrawn");
    }
    return out;
  }

  double tilde_quantile(const MatrixXd& gamma, const MatrixXd& sigma_hat, double level) const {
    std::vector<double> s = tilde_samples(gamma, sigma_hat);
    return stats::empirical_quantile(std::move(s), level);
  }

 private:
  bool replica_stat(const MatrixXd& gamma, const MatrixXd& root, const MatrixXd& inv_root,
                    const Eigen::Ref<const MatrixXd>& xi, double* stat) const {
    MatrixXd s_yy = MatrixXd::Zero(d_, d_);
    MatrixXd s_ey = MatrixXd::Zero(d_, d_);
    VectorXd y = VectorXd::Zero(d_);
    VectorXd e(d_);
    for (int t = 0; t < n_; ++t) {
      e.noalias() = root * xi.row(t).transpose();
      s_yy.noalias() += y * y.transpose();
      s_ey.noalias() += e * y.transpose();
      y = gamma * y + e;
    }
    s_yy /= n_;
    s_ey /= n_;
    if (!(linalg::cond_sym(s_yy) <= linalg::kCondGate)) return false;
    MatrixXd half = inv_root * s_ey;  // Sigma^{-1/2} S_eY
    MatrixXd m = half * s_yy.ldlt().solve(half.transpose());
    *stat = n_ * m.trace();
    return true;
  }

  std::string cache_path(const char* dir) const {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s/uvi_qdev_%016llx_%d_%d_%d.bin", dir,
                  static_cast<unsigned long long>(seed_), B_, n_, d_);
    return std::string(buf);
  }

  bool load_cache(const char* dir) {
    std::ifstream in(cache_path(dir), std::ios::binary);
    if (!in) return false;
    char magic[8];
    std::uint64_t hdr[4];
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
    if (!in || std::memcmp(magic, "UVIQDEV1", 8) != 0 || hdr[0] != seed_ ||
        hdr[1] != static_cast<std::uint64_t>(B_) || hdr[2] != static_cast<std::uint64_t>(n_) ||
        hdr[3] != static_cast<std::uint64_t>(d_)) {
      return false;
    }
    deviates_.resize(static_cast<Eigen::Index>(B_) * n_, d_);
    in.read(reinterpret_cast<char*>(deviates_.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(deviates_.size())));
    return static_cast<bool>(in);
  }

  void save_cache(const char* dir) const {
    std::ofstream out(cache_path(dir), std::ios::binary);
    if (!out) return;  // cache is best-effort
    std::uint64_t hdr[4] = {seed_, static_cast<std::uint64_t>(B_), static_cast<std::uint64_t>(n_),
                            static_cast<std::uint64_t>(d_)};
    out.write("UVIQDEV1", 8);
    out.write(reinterpret_cast<const char*>(hdr), sizeof hdr);
    out.write(reinterpret_cast<const char*>(deviates_.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(deviates_.size())));
  }

  int n_, d_, B_;
  std::uint64_t seed_;
  MatrixXd deviates_;
};

inline double simulate_tilde_t2_quantile(const QuantileRequest& req) {
  req.validate();
  QuantileSession session(req.n, static_cast<int>(req.gamma.rows()), req.B, req.seed);
  return session.tilde_quantile(req.gamma, req.sigma, req.level);
}

struct OuConfig {
  // Diagonal drift exponents, all <= 0. -inf marks a zero eigenvalue of
  // gamma and is clamped to fast decay internally.
  VectorXd c;
  // Loading on the Brownian motion: Sigma^{1/2}, or F Sigma^{1/2} when
  // the drift lives in an eigenbasis F.
  MatrixXd sigma_half;
  int steps = 500;

  void validate() const {
    if (c.size() < 1) throw InvalidArgument("OuConfig: empty drift");
    if (sigma_half.rows() != c.size() || sigma_half.cols() != c.size()) {
      throw InvalidArgument("OuConfig: sigma_half dimension mismatch");
    }
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      if (c[i] > 0.0) throw InvalidArgument("OuConfig: drift entries must be <= 0");
    }
    if (steps < 100) throw InvalidArgument("OuConfig: need at least 100 steps");
  }
};

namespace detail {

// (e^x - 1)/x with the x -> 0 limit.
inline double expm1_over(double x) {
  if (std::fabs(x) < 1e-8) return 1.0 + 0.5 * x;
  return std::expm1(x) / x;
}

struct OuTransition {
  VectorXd decay;     // e^{c_i/m}
  MatrixXd drift_w;   // m R, coefficient on the Brownian increment
  MatrixXd resid_root;  // square root of the residual covariance
};

inline OuTransition ou_transition(const OuConfig& cfg) {
  const Eigen::Index d = cfg.c.size();
  const double m = static_cast<double>(cfg.steps);
  VectorXd c = cfg.c;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!std::isfinite(c[i])) c[i] = -50.0 * m;  // zero eigenvalue sentinel
  }
  OuTransition tr;
  tr.decay.resize(d);
  VectorXd r(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    tr.decay[i] = std::exp(c[i] / m);
    r[i] = expm1_over(c[i] / m) / m;  // (e^{c/m}-1)/c, limit 1/m
  }
  tr.drift_w = m * r.asDiagonal() * cfg.sigma_half;
  // Residual covariance of the exact one-step transition given DeltaW:
  //   V_ij = Sigma_ij [ (e^{(c_i+c_j)/m} - 1)/(c_i+c_j) - m r_i r_j ],
  // Sigma = sigma_half sigma_half^T.
  MatrixXd sigma = cfg.sigma_half * cfg.sigma_half.transpose();
  MatrixXd v(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      double s = c[i] + c[j];
      double full = expm1_over(s / m) / m;
      v(i, j) = sigma(i, j) * (full - m * r[i] * r[j]);
    }
  }
  double scale = v.cwiseAbs().maxCoeff();
  if (scale <= 1e-300) {
    tr.resid_root = MatrixXd::Zero(d, d);
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (v + v.transpose()));
    VectorXd lam = es.eigenvalues().cwiseMax(0.0);
    tr.resid_root = es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  }
  return tr;
}

}  // namespace detail

struct OuDraw {
  double t2 = 0.0;
  MatrixXd gram;  // int J J^T dt, trapezoid
};

// One draw of the limit statistic
//   t^2 = tr( A^T B^-1 A ),  A = int J dW^T,  B = int J J^T dt,
// where dJ = C J dt + Sigma^{1/2} dW on [0,1] over a uniform grid of
// cfg.steps steps. The one-step transition is exact; the stochastic
// integral uses left-point sums and the time integral the trapezoid rule.
inline OuDraw simulate_ou_t2_draw(const OuConfig& cfg, const detail::OuTransition& tr,
                                  rng::Stream& stream) {
  const Eigen::Index d = cfg.c.size();
  const double m = static_cast<double>(cfg.steps);
  const double root_dt = std::sqrt(1.0 / m);
  VectorXd j = VectorXd::Zero(d);
  VectorXd dw(d), xi(d), jn(d);
  MatrixXd a = MatrixXd::Zero(d, d);     // sum J_k DeltaW_k^T
  MatrixXd b = MatrixXd::Zero(d, d);     // trapezoid accumulator
  for (int k = 0; k < cfg.steps; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) dw[i] = root_dt * stream.normal();
    for (Eigen::Index i = 0; i < d; ++i) xi[i] = stream.normal();
    a.noalias() += j * dw.transpose();
    b.noalias() += 0.5 / m * (j * j.transpose());
    jn = tr.decay.asDiagonal() * j;
    jn.noalias() += tr.drift_w * dw;
    jn.noalias() += tr.resid_root * xi;
    b.noalias() += 0.5 / m * (jn * jn.transpose());
    j = jn;
  }
  OuDraw out;
  out.gram = b;
  if (!(linalg::cond_sym(b) <= linalg::kCondGate)) {
    out.t2 = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.t2 = (b.ldlt().solve(a) * a.transpose()).trace();
  return out;
}

inline std::vector<double> simulate_ou_t2_samples(const OuConfig& cfg, int B, std::uint64_t seed) {
  cfg.validate();
  if (B < 99) throw InvalidArgument("simulate_ou_t2_samples: need B >= 99");
  detail::OuTransition tr = detail::ou_transition(cfg);
  rng::Stream stream = rng::Stream(seed).substream("ou-paths");
  rng::Stream redraw = rng::Stream(seed).substream("ou-redraw");
  std::vector<double> out(static_cast<std::size_t>(B));
  int redraws = 0;
  for (int b = 0; b < B; ++b) {
    OuDraw d = simulate_ou_t2_draw(cfg, tr, stream);
    int tries = 0;
    while (!std::isfinite(d.t2) && tries < 8) {
      ++tries;
      d = simulate_ou_t2_draw(cfg, tr, redraw);
    }
    if (!std::isfinite(d.t2)) throw DegenerateReplications("simulate_ou_t2: replica unrecoverable");
    if (tries > 0) ++redraws;
    out[static_cast<std::size_t>(b)] = d.t2;
  }
  if (redraws * 100 > B) {
    throw DegenerateReplications("simulate_ou_t2: more than 1% of replicas redrawn");
  }
  return out;
}

inline double simulate_ou_t2(const OuConfig& cfg, double level, int B, std::uint64_t seed) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidArgument("simulate_ou_t2: level in (0,1)");
  return stats::empirical_quantile(simulate_ou_t2_samples(cfg, B, seed), level);
}

// Monte Carlo mean of the process gram int J J^T dt; cross-checks the
// closed form below.
inline MatrixXd ou_mean_gram(const OuConfig& cfg, int B, std::uint64_t seed) {
  cfg.validate();
  detail::OuTransition tr = detail::ou_transition(cfg);
  rng::Stream stream = rng::Stream(seed).substream("ou-paths");
  MatrixXd acc = MatrixXd::Zero(cfg.c.size(), cfg.c.size());
  for (int b = 0; b < B; ++b) {
    acc += simulate_ou_t2_draw(cfg, tr, stream).gram;
  }
  return acc / B;
}

// Drift exponents for the process matched to gamma at sample size n:
// c_i = n log lambda_i in the eigenbasis of gamma, loading F Sigma^{1/2}
// with F the inverse eigenvector matrix. Requires a real, nonnegative,
// diagonalizable spectrum; lambda = 0 maps to the -inf sentinel.
inline OuConfig ou_config_from_gamma(const MatrixXd& gamma, const MatrixXd& sigma, int n,
                                     int steps = 500) {
  if (gamma.rows() != gamma.cols() || gamma.rows() < 1) {
    throw InvalidArgument("ou_config_from_gamma: gamma must be square");
  }
  Eigen::EigenSolver<MatrixXd> es(gamma);
  const Eigen::Index d = gamma.rows();
  OuConfig cfg;
  cfg.c.resize(d);
  cfg.steps = steps;
  double scale = std::max(1.0, gamma.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d; ++i) {
    std::complex<double> lam = es.eigenvalues()[i];
    if (std::fabs(lam.imag()) > 1e-9 * scale) {
      throw NonDiagonalSpectrum("ou_config_from_gamma: complex eigenvalue");
    }
    double re = lam.real();
    if (re < -1e-9 * scale) {
      throw NonDiagonalSpectrum("ou_config_from_gamma: negative eigenvalue");
    }
    if (re > 1.0 + 1e-12) {
      throw AssumptionViolation("ou_config_from_gamma: eigenvalue above one");
    }
    if (re <= 1e-300) {
      cfg.c[i] = -std::numeric_limits<double>::infinity();
    } else {
      cfg.c[i] = n * std::log(std::min(re, 1.0));
    }
  }
  Eigen::MatrixXcd vecs = es.eigenvectors();
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(vecs);
  if (!(svd.singularValues().minCoeff() > 1e-8 * svd.singularValues().maxCoeff())) {
    throw NonDiagonalSpectrum("ou_config_from_gamma: defective eigenbasis");
  }
  if (vecs.imag().cwiseAbs().maxCoeff() > 1e-9 * vecs.real().cwiseAbs().maxCoeff()) {
    throw NonDiagonalSpectrum("ou_config_from_gamma: complex eigenbasis");
  }
  MatrixXd p = vecs.real();
  MatrixXd f = p.partialPivLu().solve(MatrixXd::Identity(d, d));
  cfg.sigma_half = f * linalg::sym_sqrt(sigma, "ou_config sigma");
  return cfg;
}

// Finite-n normalizer n^{-1} sum_{t=0}^{n-1} E[X_t X_t^T] via the
// recursion M_t = gamma M_{t-1} gamma^T + sigma, M_0 = 0.
inline MatrixXd compute_H(const MatrixXd& gamma, const MatrixXd& sigma, int n) {
  if (gamma.rows() != gamma.cols() || sigma.rows() != gamma.rows() ||
      sigma.cols() != gamma.cols()) {
    throw InvalidArgument("compute_H: dimension mismatch");
  }
  if (n < 1) throw InvalidArgument("compute_H: n must be positive");
  const Eigen::Index d = gamma.rows();
  MatrixXd m = MatrixXd::Zero(d, d);
  MatrixXd acc = MatrixXd::Zero(d, d);  // includes the t = 0 zero term
  for (int t = 1; t < n; ++t) {
    m = gamma * m * gamma.transpose() + sigma;
    acc += m;
  }
  return acc / n;
}

// Mean gram of the limit process: G_ij = Sigma_ij [ (e^s - 1)/s^2 - 1/s ],
// s = c_i + c_j, with the s -> 0 limit Sigma_ij / 2.
inline MatrixXd compute_G(const VectorXd& c, const MatrixXd& sigma) {
  if (sigma.rows() != c.size() || sigma.cols() != c.size()) {
    throw InvalidArgument("compute_G: dimension mismatch");
  }
  const Eigen::Index d = c.size();
  MatrixXd g(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      double ci = c[i];
      double cj = c[j];
      if (ci > 0.0 || cj > 0.0) throw InvalidArgument("compute_G: drift must be <= 0");
      double s = ci + cj;  // -inf sentinels flow through: expm1(-inf)/inf - 0 = 0
      if (std::fabs(s) < 1e-6) {
        // Series: 1/2 + s/6 + s^2/24.
        g(i, j) = sigma(i, j) * (0.5 + s / 6.0 + s * s / 24.0);
      } else {
        g(i, j) = sigma(i, j) * (std::expm1(s) / (s * s) - 1.0 / s);
      }
    }
  }
  return g;
}

}  // namespace uvi
