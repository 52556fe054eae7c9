#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <string>

#include "uvi/errors.hpp"

namespace uvi::linalg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Condition gate shared by every sample Gram inverse.
inline constexpr double kCondGate = 1e12;
// Relative eigenvalue floor for symmetric (inverse) square roots.
inline constexpr double kEigFloor = 1e-14;

inline bool is_symmetric(const MatrixXd& a, double tol = 1e-10) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + a.cwiseAbs().maxCoeff());
}

// Condition number of a symmetric PSD matrix; +inf when the smallest
// eigenvalue is not positive.
inline double cond_sym(const MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  double lo = es.eigenvalues().minCoeff();
  double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

// General condition number via singular values.
inline double cond_general(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a);
  double lo = svd.singularValues().minCoeff();
  double hi = svd.singularValues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

inline void require_well_conditioned(const MatrixXd& s, const std::string& name) {
  double c = is_symmetric(s) ? cond_sym(s) : cond_general(s);
  if (!(c <= kCondGate)) {
    throw SingularMoments(name + ": condition number " + std::to_string(c) + " exceeds gate");
  }
}

namespace detail {

inline MatrixXd sym_power(const MatrixXd& s, double expo, const std::string& name) {
  if (!is_symmetric(s)) throw InvalidArgument(name + ": matrix not symmetric");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
  VectorXd lam = es.eigenvalues();
  double floor = kEigFloor * std::max(1.0, lam.cwiseAbs().maxCoeff());
  VectorXd pw(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    pw[i] = std::pow(std::max(lam[i], floor), expo);
  }
  return es.eigenvectors() * pw.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

inline MatrixXd sym_sqrt(const MatrixXd& s, const std::string& name = "sym_sqrt") {
  return detail::sym_power(s, 0.5, name);
}

inline MatrixXd sym_inv_sqrt(const MatrixXd& s, const std::string& name = "sym_inv_sqrt") {
  return detail::sym_power(s, -0.5, name);
}

inline MatrixXd sym_inverse(const MatrixXd& s, const std::string& name = "sym_inverse") {
  return detail::sym_power(s, -1.0, name);
}

inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Column-stacking vec.
inline VectorXd vec(const MatrixXd& a) {
  return Eigen::Map<const VectorXd>(a.data(), a.size());
}

inline MatrixXd unvec(const VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw InvalidArgument("unvec: size mismatch");
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

}  // namespace uvi::linalg
