#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "uvi/errors.hpp"
#include "uvi/stats.hpp"

namespace uvi {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Gaussian-process interpolator of an expensive function, kernel
// K_beta(x, x') = exp(-sum_i (x_i - x'_i)^2 / beta_i).
struct GpModel {
  MatrixXd points;       // L x p
  VectorXd values;       // L
  double mean = 0.0;     // mu_hat
  double variance = 0.0; // sigma2_hat
  VectorXd beta;         // squared lengthscales, p
  double jitter = 1e-8;
  Eigen::LLT<MatrixXd> factor;  // of R + jitter I
  VectorXd alpha;               // (R + jitter I)^{-1} (values - mean 1)
  bool constant = false;        // values numerically constant

  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

namespace gp_detail {

inline void correlation(const std::vector<MatrixXd>& sqdist, const VectorXd& beta, MatrixXd* r) {
  const Eigen::Index L = sqdist.empty() ? 0 : sqdist[0].rows();
  r->setZero(L, L);
  for (std::size_t k = 0; k < sqdist.size(); ++k) {
    r->noalias() -= sqdist[k] / beta[static_cast<Eigen::Index>(k)];
  }
  *r = r->array().exp().matrix();
}

struct Profile {
  double nll = std::numeric_limits<double>::infinity();
  double mean = 0.0;
  double variance = 0.0;
};

// Profile negative log likelihood: mean and variance maximized in
// closed form given the correlation matrix.
inline Profile profile_nll(const MatrixXd& r_base, const VectorXd& y, double jitter) {
  const Eigen::Index L = y.size();
  MatrixXd r = r_base;
  r.diagonal().array() += jitter;
  Eigen::LLT<MatrixXd> llt(r);
  Profile out;
  if (llt.info() != Eigen::Success) return out;
  VectorXd ones = VectorXd::Ones(L);
  VectorXd ri_y = llt.solve(y);
  VectorXd ri_1 = llt.solve(ones);
  double denom = ones.dot(ri_1);
  if (!(denom > 0.0)) return out;
  out.mean = ones.dot(ri_y) / denom;
  VectorXd centered = y - out.mean * ones;
  out.variance = centered.dot(llt.solve(centered)) / L;
  if (!(out.variance > 0.0)) out.variance = 1e-300;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < L; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  out.nll = L * std::log(out.variance) + logdet;
  return out;
}

// Nelder-Mead on log beta. Small dimension, modest budget; the
// surrounding restarts handle multimodality.
inline VectorXd nelder_mead(const std::function<double(const VectorXd&)>& fn, VectorXd x0,
                            double step, int max_eval) {
  const Eigen::Index p = x0.size();
  std::vector<VectorXd> xs(static_cast<std::size_t>(p) + 1, x0);
  std::vector<double> fs(static_cast<std::size_t>(p) + 1);
  for (Eigen::Index i = 0; i < p; ++i) xs[static_cast<std::size_t>(i) + 1][i] += step;
  int evals = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    fs[i] = fn(xs[i]);
    ++evals;
  }
  auto order = [&] {
    for (std::size_t i = 1; i < xs.size(); ++i) {
      for (std::size_t j = i; j > 0 && fs[j] < fs[j - 1]; --j) {
        std::swap(fs[j], fs[j - 1]);
        std::swap(xs[j], xs[j - 1]);
      }
    }
  };
  order();
  while (evals < max_eval) {
    if (std::fabs(fs.back() - fs.front()) <= 1e-5 * (1.0 + std::fabs(fs.front()))) break;
    VectorXd centroid = VectorXd::Zero(p);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) centroid += xs[i];
    centroid /= static_cast<double>(p);
    VectorXd xr = centroid + (centroid - xs.back());
    double fr = fn(xr);
    ++evals;
    if (fr < fs.front()) {
      VectorXd xe = centroid + 2.0 * (centroid - xs.back());
      double fe = fn(xe);
      ++evals;
      if (fe < fr) {
        xs.back() = xe;
        fs.back() = fe;
      } else {
        xs.back() = xr;
        fs.back() = fr;
      }
    } else if (fr < fs[fs.size() - 2]) {
      xs.back() = xr;
      fs.back() = fr;
    } else {
      VectorXd xc = centroid + 0.5 * (xs.back() - centroid);
      double fc = fn(xc);
      ++evals;
      if (fc < fs.back()) {
        xs.back() = xc;
        fs.back() = fc;
      } else {
        for (std::size_t i = 1; i < xs.size(); ++i) {
          xs[i] = xs.front() + 0.5 * (xs[i] - xs.front());
          fs[i] = fn(xs[i]);
          ++evals;
        }
      }
    }
    order();
  }
  return xs.front();
}

}  // namespace gp_detail

// Fit with hyperparameters from the marginal likelihood, restarted from
// 5 scaled initial guesses. Pass beta_init to skip the search and only
// refresh the factorization (refit cadence in the surrounding loop).
inline GpModel gp_fit(const MatrixXd& points, const VectorXd& values,
                      const VectorXd* beta_init = nullptr) {
  const Eigen::Index L = points.rows();
  const Eigen::Index p = points.cols();
  if (L < 2 || p < 1) throw InvalidArgument("gp_fit: need L >= 2 points");
  if (values.size() != L) throw InvalidArgument("gp_fit: values size mismatch");

  VectorXd range(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double r = points.col(j).maxCoeff() - points.col(j).minCoeff();
    range[j] = r > 1e-12 ? r : 1.0;
  }
  for (Eigen::Index a = 0; a < L; ++a) {
    for (Eigen::Index b = a + 1; b < L; ++b) {
      if (((points.row(a) - points.row(b)).cwiseAbs().maxCoeff()) <= 1e-10) {
        throw DegenerateDesign("gp_fit: duplicate design points");
      }
    }
  }

  GpModel model;
  model.points = points;
  model.values = values;

  double yscale = values.cwiseAbs().maxCoeff();
  if ((values.maxCoeff() - values.minCoeff()) <= 1e-12 * (1.0 + yscale)) {
    model.constant = true;
    model.mean = values.mean();
    model.variance = 0.0;
    model.beta = range.cwiseProduct(range);
    return model;
  }

  std::vector<MatrixXd> sqdist(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) {
    MatrixXd& dj = sqdist[static_cast<std::size_t>(j)];
    dj.resize(L, L);
    for (Eigen::Index a = 0; a < L; ++a) {
      for (Eigen::Index b = 0; b < L; ++b) {
        double diff = points(a, j) - points(b, j);
        dj(a, b) = diff * diff;
      }
    }
  }

  // Lengthscales confined to [1e-3, 30] times the coordinate range;
  // outside that the likelihood surface is flat or degenerate.
  VectorXd logbeta_lo(p), logbeta_hi(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    logbeta_lo[j] = 2.0 * std::log(1e-3 * range[j]);
    logbeta_hi[j] = 2.0 * std::log(30.0 * range[j]);
  }
  auto clamp_logbeta = [&](VectorXd lb) {
    for (Eigen::Index j = 0; j < p; ++j) lb[j] = std::clamp(lb[j], logbeta_lo[j], logbeta_hi[j]);
    return lb;
  };

  MatrixXd r_work;
  auto objective = [&](const VectorXd& logbeta) {
    VectorXd beta = clamp_logbeta(logbeta).array().exp().matrix();
    gp_detail::correlation(sqdist, beta, &r_work);
    return gp_detail::profile_nll(r_work, values, 1e-8).nll;
  };

  VectorXd best_logbeta;
  if (beta_init != nullptr) {
    if (beta_init->size() != p) throw InvalidArgument("gp_fit: beta_init size mismatch");
    best_logbeta = clamp_logbeta(beta_init->array().log().matrix());
  } else {
    static const double scales[5] = {0.1, 0.3, 1.0, 3.0, 10.0};
    double best = std::numeric_limits<double>::infinity();
    const int budget = 24 + 8 * static_cast<int>(p);
    for (double s : scales) {
      VectorXd start(p);
      for (Eigen::Index j = 0; j < p; ++j) start[j] = 2.0 * std::log(s * range[j]);
      VectorXd sol = gp_detail::nelder_mead(objective, start, 0.7, budget);
      double val = objective(sol);
      if (val < best) {
        best = val;
        best_logbeta = sol;
      }
    }
    if (!best_logbeta.size()) throw IllConditioned("gp_fit: likelihood search failed");
    best_logbeta = clamp_logbeta(best_logbeta);
  }

  model.beta = best_logbeta.array().exp().matrix();
  gp_detail::correlation(sqdist, model.beta, &r_work);
  double jitter = 1e-8;
  for (;;) {
    gp_detail::Profile prof = gp_detail::profile_nll(r_work, values, jitter);
    if (std::isfinite(prof.nll)) {
      MatrixXd r = r_work;
      r.diagonal().array() += jitter;
      model.factor.compute(r);
      model.jitter = jitter;
      model.mean = prof.mean;
      model.variance = prof.variance;
      model.alpha = model.factor.solve(values - prof.mean * VectorXd::Ones(L));
      return model;
    }
    jitter *= 10.0;
    if (jitter > 1e-4 * 1.000001) {
      throw IllConditioned("gp_fit: kernel matrix not factorizable at max jitter");
    }
  }
}

struct GpPrediction {
  double mean = 0.0;
  double sd = 0.0;
  VectorXd dmean;  // only filled by the gradient variant
  VectorXd dsd;
};

namespace gp_detail {

inline VectorXd cross_corr(const GpModel& m, const VectorXd& x) {
  const Eigen::Index L = m.size();
  VectorXd r(L);
  for (Eigen::Index a = 0; a < L; ++a) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < m.dim(); ++j) {
      double diff = x[j] - m.points(a, j);
      s += diff * diff / m.beta[j];
    }
    r[a] = std::exp(-s);
  }
  return r;
}

}  // namespace gp_detail

// Posterior mean and full posterior sd at x.
inline GpPrediction gp_predict(const GpModel& m, const VectorXd& x) {
  if (x.size() != m.dim()) throw InvalidArgument("gp_predict: dimension mismatch");
  GpPrediction out;
  if (m.constant) {
    out.mean = m.mean;
    out.sd = 0.0;
    return out;
  }
  VectorXd r = gp_detail::cross_corr(m, x);
  out.mean = m.mean + r.dot(m.alpha);
  VectorXd u = m.factor.solve(r);
  double q = r.dot(u);
  out.sd = std::sqrt(m.variance * std::max(0.0, 1.0 - q));
  return out;
}

// Prediction with gradients of mean and sd in x.
inline GpPrediction gp_predict_grad(const GpModel& m, const VectorXd& x) {
  if (x.size() != m.dim()) throw InvalidArgument("gp_predict_grad: dimension mismatch");
  const Eigen::Index p = m.dim();
  GpPrediction out;
  out.dmean = VectorXd::Zero(p);
  out.dsd = VectorXd::Zero(p);
  if (m.constant) {
    out.mean = m.mean;
    return out;
  }
  VectorXd r = gp_detail::cross_corr(m, x);
  const Eigen::Index L = m.size();
  MatrixXd dr(L, p);  // dr_a / dx_j
  for (Eigen::Index a = 0; a < L; ++a) {
    for (Eigen::Index j = 0; j < p; ++j) {
      dr(a, j) = r[a] * (-2.0 * (x[j] - m.points(a, j)) / m.beta[j]);
    }
  }
  out.mean = m.mean + r.dot(m.alpha);
  out.dmean = dr.transpose() * m.alpha;
  VectorXd u = m.factor.solve(r);
  double q = r.dot(u);
  double var = m.variance * std::max(0.0, 1.0 - q);
  out.sd = std::sqrt(var);
  if (out.sd > 1e-12 * std::sqrt(m.variance)) {
    VectorXd dq = 2.0 * (dr.transpose() * u);
    out.dsd = -m.variance * dq / (2.0 * out.sd);
  }
  return out;
}

// EI_L(x) = (f(x) - y*)_+ * (1 - Phi((g(x) - c_L(x)) / s_L(x))) with the
// full posterior sd in the denominator; s_L = 0 degenerates to the
// indicator of g(x) <= c_L(x).
inline double expected_improvement(const GpModel& m, const VectorXd& x, double f_value,
                                   double g_value, double y_star) {
  double u = f_value - y_star;
  if (!(u > 0.0)) return 0.0;
  GpPrediction pred = gp_predict(m, x);
  if (pred.sd <= 0.0) {
    return g_value <= pred.mean ? u : 0.0;
  }
  double z = (g_value - pred.mean) / pred.sd;
  return u * stats::normal_cdf(-z);
}

}  // namespace uvi
