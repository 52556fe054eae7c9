#pragma once

#include <stdexcept>
#include <string>

namespace uvi {

// Base for everything thrown by the library. Catch sites in the CLI map
// subclasses onto exit codes, so keep the hierarchy flat and stable.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// Model or path violates a stated precondition (dimensions, sample size,
// eigenvalue region, spectrum mismatch).
struct AssumptionViolation : Error {
  explicit AssumptionViolation(const std::string& msg) : Error(msg) {}
};

// A sample Gram matrix is numerically singular (condition number past the
// 1e12 gate) where an inverse is required.
struct SingularMoments : Error {
  explicit SingularMoments(const std::string& msg) : Error(msg) {}
};

// Restriction matrix in a Wald statistic does not have full row rank.
struct RankDeficient : Error {
  explicit RankDeficient(const std::string& msg) : Error(msg) {}
};

// Random basis draws kept failing the conditioning gate.
struct SingularBasis : Error {
  explicit SingularBasis(const std::string& msg) : Error(msg) {}
};

// Gamma is not diagonalizable with the real nonnegative spectrum the OU
// construction needs.
struct NonDiagonalSpectrum : Error {
  explicit NonDiagonalSpectrum(const std::string& msg) : Error(msg) {}
};

// More than 1% of simulation replicas failed the condition gate.
struct DegenerateReplications : Error {
  explicit DegenerateReplications(const std::string& msg) : Error(msg) {}
};

// GP design has (near-)duplicate rows.
struct DegenerateDesign : Error {
  explicit DegenerateDesign(const std::string& msg) : Error(msg) {}
};

// GP correlation matrix stayed non-PD after the jitter ladder.
struct IllConditioned : Error {
  explicit IllConditioned(const std::string& msg) : Error(msg) {}
};

// Confidence region came back empty where a nonempty one is required.
struct EmptyRegion : Error {
  explicit EmptyRegion(const std::string& msg) : Error(msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace uvi
