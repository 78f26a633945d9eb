#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace convexflows {

using Vec = std::vector<double>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DimensionError : Error {
  using Error::Error;
};
struct InvalidEdgeError : Error {
  using Error::Error;
};
struct UnboundedSubproblemError : Error {
  using Error::Error;
};
struct InfeasibleStartError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};

struct RecoveryError : Error {
  RecoveryError(const std::string& what, double residual)
      : Error(what), residual(residual) {}
  double residual;
};

// Kind tag plus numeric parameters of a bundled oracle; the io layer maps this
// to and from the instance file's `{kind, params}` objects.
struct OracleSpec {
  std::string kind;
  std::map<std::string, double> scalars;
  std::map<std::string, Vec> vectors;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_nonneg(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return v >= 0.0; });
}

}  // namespace convexflows
