#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "uvi/errors.hpp"
#include "uvi/linalg.hpp"
#include "uvi/rng.hpp"

namespace uvi {

using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using json = nlohmann::json;

struct ModelParams {
  MatrixXd gamma;
  MatrixXd sigma;
  double moment_bound = 1.0;
  // Intended eigenvalues, multiplicity by repetition. Optional; when
  // present it must match gamma's spectrum.
  std::optional<VectorXcd> spectrum;

  int dim() const { return static_cast<int>(gamma.rows()); }

  void validate() const {
    if (gamma.rows() < 1 || gamma.rows() != gamma.cols()) {
      throw InvalidArgument("ModelParams: gamma must be square and nonempty");
    }
    if (sigma.rows() != gamma.rows() || sigma.cols() != gamma.cols()) {
      throw InvalidArgument("ModelParams: sigma dimension mismatch");
    }
    if (!linalg::is_symmetric(sigma, 1e-10)) {
      throw InvalidArgument("ModelParams: sigma not symmetric within 1e-10");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
    if (!(es.eigenvalues().minCoeff() > 0.0)) {
      throw InvalidArgument("ModelParams: sigma not positive definite");
    }
    if (!(moment_bound > 0.0)) {
      throw InvalidArgument("ModelParams: moment_bound must be positive");
    }
    if (spectrum) {
      if (spectrum->size() != gamma.rows()) {
        throw InvalidArgument("ModelParams: spectrum length mismatch");
      }
      // Greedy multiset match against the computed eigenvalues.
      Eigen::EigenSolver<MatrixXd> ges(gamma);
      std::vector<std::complex<double>> have(ges.eigenvalues().data(),
                                             ges.eigenvalues().data() + ges.eigenvalues().size());
      double tol = 1e-8 * std::max(1.0, gamma.cwiseAbs().maxCoeff());
      for (Eigen::Index i = 0; i < spectrum->size(); ++i) {
        std::complex<double> want = (*spectrum)[i];
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_at = 0;
        for (std::size_t k = 0; k < have.size(); ++k) {
          double dd = std::abs(have[k] - want);
          if (dd < best) {
            best = dd;
            best_at = k;
          }
        }
        if (!(best <= tol)) {
          throw InvalidArgument("ModelParams: declared spectrum does not match gamma");
        }
        have.erase(have.begin() + static_cast<std::ptrdiff_t>(best_at));
      }
    }
  }
};

struct VarPath {
  // Row t-1 holds X_t, t = 1..n. X_0 = 0 by convention.
  MatrixXd data;

  int n() const { return static_cast<int>(data.rows()); }
  int d() const { return static_cast<int>(data.cols()); }

  void validate() const {
    if (data.cols() < 1) throw InvalidArgument("VarPath: empty path");
    if (data.rows() < 2 * data.cols() + 2) {
      throw AssumptionViolation("VarPath: need n >= 2d + 2 observations");
    }
  }
};

struct ErrorSpec {
  enum class Kind { gaussian, scaled_student_t, custom };
  Kind kind = Kind::gaussian;
  double df = 0.0;          // scaled_student_t only; must exceed 2
  std::string generator;    // custom only

  static ErrorSpec gaussian_errors() { return {}; }
  static ErrorSpec student_t(double df) {
    if (!(df > 2.0)) throw InvalidArgument("ErrorSpec: student t needs df > 2");
    ErrorSpec s;
    s.kind = Kind::scaled_student_t;
    s.df = df;
    return s;
  }
  static ErrorSpec custom(std::string id) {
    ErrorSpec s;
    s.kind = Kind::custom;
    s.generator = std::move(id);
    return s;
  }
};

// Custom generators produce an n x d matrix of standardized innovations
// (zero mean, identity covariance); the simulator applies sigma^{1/2}.
using ErrorGenerator = std::function<MatrixXd(rng::Stream&, int, int)>;

inline std::map<std::string, ErrorGenerator>& error_generator_registry() {
  static std::map<std::string, ErrorGenerator> reg;
  return reg;
}

inline void register_error_generator(const std::string& id, ErrorGenerator gen) {
  error_generator_registry()[id] = std::move(gen);
}

struct EigenValueVerdict {
  std::complex<double> lambda;
  bool in_region = false;
  // Within 1e-9 of the region boundary.
  bool boundary = false;
};

struct AssumptionReport {
  std::vector<EigenValueVerdict> eigenvalues;
  double alpha = 0.0;
  double sigma_min_eig = 0.0;
  double sigma_max_eig = 0.0;
  bool sigma_pd = false;
  double basis_cond = 0.0;
  bool near_defective = false;
  bool spectrum_consistent = true;
  bool pass = false;
};

// Region for admissible eigenvalues at significance alpha:
//   |l| <= 1  and  |l| |1-l| <= r_a (1 - |l|),  r_a = (1-a)(2-a)/a.
// On the unit circle only l = 1 is admitted (1e-12 absolute).
inline bool eigenvalue_in_region(std::complex<double> lambda, double alpha,
                                 bool* boundary = nullptr) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("eigenvalue_in_region: alpha in (0,1)");
  const double r = (1.0 - alpha) * (2.0 - alpha) / alpha;
  const double mag = std::abs(lambda);
  if (boundary) *boundary = false;
  if (std::abs(lambda - 1.0) <= 1e-12) {
    if (boundary) *boundary = true;
    return true;
  }
  if (mag > 1.0) return false;
  const double lhs = mag * std::abs(1.0 - lambda);
  const double rhs = r * (1.0 - mag);
  if (boundary) *boundary = std::fabs(lhs - rhs) <= 1e-9 * (1.0 + rhs);
  return lhs <= rhs * (1.0 + 1e-12);
}

inline std::vector<EigenValueVerdict> check_eigenvalue_region(const MatrixXd& gamma,
                                                              double alpha = 0.01) {
  if (gamma.rows() != gamma.cols() || gamma.rows() < 1) {
    throw InvalidArgument("check_eigenvalue_region: gamma must be square");
  }
  Eigen::EigenSolver<MatrixXd> es(gamma);
  std::vector<EigenValueVerdict> out;
  out.reserve(static_cast<std::size_t>(gamma.rows()));
  for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
    EigenValueVerdict v;
    v.lambda = es.eigenvalues()[i];
    v.in_region = eigenvalue_in_region(v.lambda, alpha, &v.boundary);
    out.push_back(v);
  }
  return out;
}

inline AssumptionReport check_assumptions(const ModelParams& params, double alpha = 0.01) {
  params.validate();
  AssumptionReport rep;
  rep.alpha = alpha;
  rep.eigenvalues = check_eigenvalue_region(params.gamma, alpha);
  bool all_in = true;
  for (const auto& v : rep.eigenvalues) all_in = all_in && v.in_region;

  Eigen::SelfAdjointEigenSolver<MatrixXd> es(params.sigma);
  rep.sigma_min_eig = es.eigenvalues().minCoeff();
  rep.sigma_max_eig = es.eigenvalues().maxCoeff();
  rep.sigma_pd = rep.sigma_min_eig > 0.0;

  // Proxy for a near-defective gamma: ill-conditioned eigenvector basis.
  Eigen::EigenSolver<MatrixXd> ges(params.gamma);
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(ges.eigenvectors());
  double lo = svd.singularValues().minCoeff();
  double hi = svd.singularValues().maxCoeff();
  rep.basis_cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  rep.near_defective = !(rep.basis_cond < 1e8);

  rep.spectrum_consistent = true;  // validate() already threw on mismatch
  rep.pass = all_in && rep.sigma_pd;
  return rep;
}

// Spectrum used by the simulation experiments: one unit root plus roots
// approaching one at rates n^{-1/k}, k = 1..d-1.
inline VectorXd cascade_spectrum(int d, int n) {
  if (d < 1) throw InvalidArgument("cascade_spectrum: d must be positive");
  if (n < 2) throw InvalidArgument("cascade_spectrum: n must be at least 2");
  VectorXd lam(d);
  lam[0] = 1.0;
  for (int i = 2; i <= d; ++i) {
    lam[i - 1] = 1.0 - std::pow(1.0 / n, 1.0 / (i - 1));
  }
  return lam;
}

struct SpectrumGamma {
  MatrixXd gamma;
  VectorXd lambdas;
  MatrixXd basis;  // U with gamma = U^{-1} diag(lambdas) U
  int tries = 0;
};

// Random similarity transform of a given real spectrum. Basis entries are
// Unif[0,1]; draws are rejected until cond(U) < 1e6, at most 50 tries.
inline SpectrumGamma construct_gamma_from_spectrum(const VectorXd& lambdas, std::uint64_t seed) {
  const int d = static_cast<int>(lambdas.size());
  if (d < 1) throw InvalidArgument("construct_gamma_from_spectrum: empty spectrum");
  rng::Stream stream = rng::Stream(seed).substream("basis");
  SpectrumGamma out;
  out.lambdas = lambdas;
  for (int attempt = 1; attempt <= 50; ++attempt) {
    MatrixXd u(d, d);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) u(i, j) = stream.uniform();
    }
    if (linalg::cond_general(u) < 1e6) {
      out.basis = u;
      out.tries = attempt;
      MatrixXd lam_u = lambdas.asDiagonal() * u;
      out.gamma = u.partialPivLu().solve(lam_u);
      return out;
    }
  }
  throw SingularBasis("construct_gamma_from_spectrum: no well-conditioned basis in 50 draws");
}

inline SpectrumGamma construct_gamma_from_spectrum(int d, int n, std::uint64_t seed) {
  return construct_gamma_from_spectrum(cascade_spectrum(d, n), seed);
}

// Standardized innovations for one path, n x d.
inline MatrixXd draw_innovations(const ErrorSpec& spec, int n, int d, rng::Stream& stream) {
  MatrixXd z(n, d);
  switch (spec.kind) {
    case ErrorSpec::Kind::gaussian:
      for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) z(t, j) = stream.normal();
      }
      return z;
    case ErrorSpec::Kind::scaled_student_t: {
      if (!(spec.df > 2.0)) throw InvalidArgument("draw_innovations: student t needs df > 2");
      const double scale = std::sqrt((spec.df - 2.0) / spec.df);
      for (int t = 0; t < n; ++t) {
        for (int j = 0; j < d; ++j) z(t, j) = scale * stream.student_t(spec.df);
      }
      return z;
    }
    case ErrorSpec::Kind::custom: {
      auto& reg = error_generator_registry();
      auto it = reg.find(spec.generator);
      if (it == reg.end()) {
        throw InvalidArgument("draw_innovations: unknown generator '" + spec.generator + "'");
      }
      MatrixXd e = it->second(stream, n, d);
      if (e.rows() != n || e.cols() != d) {
        throw InvalidArgument("draw_innovations: generator returned wrong shape");
      }
      return e;
    }
  }
  throw InvalidArgument("draw_innovations: bad kind");
}

// X_t = gamma X_{t-1} + eps_t, X_0 = 0, eps_t = sigma^{1/2} z_t.
inline VarPath simulate_var(const ModelParams& params, int n, const ErrorSpec& errors,
                            std::uint64_t seed) {
  params.validate();
  const int d = params.dim();
  if (n < 2 * d + 2) throw InvalidArgument("simulate_var: need n >= 2d + 2");
  rng::Stream stream = rng::Stream(seed).substream("errors");
  MatrixXd z = draw_innovations(errors, n, d, stream);
  MatrixXd root = linalg::sym_sqrt(params.sigma, "simulate_var sigma");
  VarPath path;
  path.data.resize(n, d);
  VectorXd x = VectorXd::Zero(d);
  for (int t = 0; t < n; ++t) {
    x = params.gamma * x + root * z.row(t).transpose();
    path.data.row(t) = x.transpose();
  }
  return path;
}

inline void to_json(json& j, const ModelParams& p) {
  auto mat = [](const MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
      rows.push_back(row);
    }
    return rows;
  };
  j = json{{"gamma", mat(p.gamma)}, {"sigma", mat(p.sigma)}, {"moment_bound", p.moment_bound}};
  if (p.spectrum) {
    json spec = json::array();
    for (Eigen::Index i = 0; i < p.spectrum->size(); ++i) {
      spec.push_back(json{{"re", (*p.spectrum)[i].real()}, {"im", (*p.spectrum)[i].imag()}});
    }
    j["spectrum"] = spec;
  }
}

inline void from_json(const json& j, ModelParams& p) {
  auto mat = [](const json& rows) {
    if (!rows.is_array() || rows.empty()) throw InvalidArgument("matrix json: expected rows");
    const auto r = rows.size();
    const auto c = rows[0].size();
    MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw InvalidArgument("matrix json: ragged rows");
      for (std::size_t k = 0; k < c; ++k) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k].get<double>();
    }
    return m;
  };
  p.gamma = mat(j.at("gamma"));
  p.sigma = mat(j.at("sigma"));
  p.moment_bound = j.value("moment_bound", 1.0);
  p.spectrum.reset();
  if (j.contains("spectrum")) {
    const auto& spec = j.at("spectrum");
    VectorXcd s(static_cast<Eigen::Index>(spec.size()));
    for (std::size_t i = 0; i < spec.size(); ++i) {
      s[static_cast<Eigen::Index>(i)] =
          std::complex<double>(spec[i].at("re").get<double>(), spec[i].at("im").get<double>());
    }
    p.spectrum = s;
  }
  p.validate();
}

inline void to_json(json& j, const AssumptionReport& r) {
  json eigs = json::array();
  for (const auto& v : r.eigenvalues) {
    eigs.push_back(json{{"re", v.lambda.real()},
                        {"im", v.lambda.imag()},
                        {"in_region", v.in_region},
                        {"boundary", v.boundary}});
  }
  j = json{{"alpha", r.alpha},
           {"eigenvalues", eigs},
           {"sigma_min_eig", r.sigma_min_eig},
           {"sigma_max_eig", r.sigma_max_eig},
           {"sigma_pd", r.sigma_pd},
           {"basis_cond", r.basis_cond},
           {"near_defective", r.near_defective},
           {"spectrum_consistent", r.spectrum_consistent},
           {"pass", r.pass}};
}

}  // namespace uvi
