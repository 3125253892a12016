#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tubempc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Inconsistent vector/matrix sizes in user-facing calls.
struct DimensionError : Error {
  using Error::Error;
};

/// Non-finite values or a numerically unusable problem.
struct NumericalError : Error {
  using Error::Error;
};

/// Malformed configuration or artifact files.
struct ConfigError : Error {
  using Error::Error;
};

/// An offline design step cannot be completed; the message names the
/// violated condition.
struct DesignError : Error {
  using Error::Error;
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

inline void require_dims(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

/// Polynomial of class K: p(c) = sum_j a[j-1] * c^j (no constant term).
struct KPoly {
  std::vector<double> a;

  double operator()(double c) const {
    double v = 0.0, pw = 1.0;
    for (double aj : a) {
      pw *= c;
      v += aj * pw;
    }
    return v;
  }

  bool empty() const { return a.empty(); }

  /// sum_{k>=0} p(rho^k c) for polynomials: coefficient j scales by 1/(1-rho^j).
  KPoly geometric_sum(double rho) const {
    KPoly out;
    out.a.resize(a.size());
    double rj = 1.0;
    for (size_t j = 0; j < a.size(); ++j) {
      rj *= rho;
      out.a[j] = a[j] / (1.0 - rj);
    }
    return out;
  }

  /// p(alpha * c): coefficient j scales by alpha^j.
  KPoly scale_argument(double alpha) const {
    KPoly out;
    out.a.resize(a.size());
    double pw = 1.0;
    for (size_t j = 0; j < a.size(); ++j) {
      pw *= alpha;
      out.a[j] = a[j] * pw;
    }
    return out;
  }

  /// Inverse on [0, inf) by bisection; valid for nondecreasing p.
  double inverse(double y, double hi_guess = 1.0) const;
};

/// Deterministic RNG helpers. std::uniform_real_distribution is
/// implementation-defined, so traces use these instead.
struct Rng {
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next_u64() {
    // xorshift64*
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  double uniform() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int n) {  // [0, n)
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
  }

  double normal() {
    // Box-Muller on deterministic uniforms.
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Vector unit_vector(int n) {
    Vector v(n);
    double nrm = 0.0;
    do {
      for (int i = 0; i < n; ++i) v[i] = normal();
      nrm = v.norm();
    } while (nrm < 1e-12);
    return v / nrm;
  }

 private:
  uint64_t state_;
};

}  // namespace tubempc
