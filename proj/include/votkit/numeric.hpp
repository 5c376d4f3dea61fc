#ifndef VOTKIT_NUMERIC_HPP
#define VOTKIT_NUMERIC_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string_view>

namespace votkit {

// log(sum_i exp(v_i)) with max-subtraction, valid for any finite input.
template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& v) {
  using Scalar = typename Derived::Scalar;
  eigen_assert(v.size() > 0);
  const Scalar m = v.maxCoeff();
  if (!std::isfinite(m)) {
    return m;  // all -inf, or a nan/inf poisons the sum anyway
  }
  return m + std::log((v.array() - m).exp().sum());
}

// softmax(v) written into `out`; same stabilization as log_sum_exp.
template <typename DerivedIn, typename DerivedOut>
void softmax_into(const Eigen::MatrixBase<DerivedIn>& v,
                  Eigen::MatrixBase<DerivedOut> const& out) {
  using Scalar = typename DerivedIn::Scalar;
  const Scalar m = v.maxCoeff();
  auto& o = const_cast<Eigen::MatrixBase<DerivedOut>&>(out);
  o = (v.array() - m).exp().matrix();
  o /= o.sum();
}

// ---------------------------------------------------------------------------
// Classical distribution tails for OLS inference. Regularized incomplete
// beta via the Lentz continued fraction (converges for all 0<x<1, a,b>0).
// ---------------------------------------------------------------------------

namespace detail {

inline double ibeta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace detail

// I_x(a, b), the regularized incomplete beta function.
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("incomplete_beta: a, b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * detail::ibeta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(ln_front) * detail::ibeta_cf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with nu degrees of freedom.
inline double student_t_cdf(double t, double nu) {
  if (nu <= 0.0) throw std::invalid_argument("student_t_cdf: nu must be > 0");
  if (t == 0.0) return 0.5;
  const double p = 0.5 * incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
  return t > 0.0 ? 1.0 - p : p;
}

// Two-sided p-value for a t statistic.
inline double student_t_two_sided_p(double t, double nu) {
  return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

// Upper quantile: smallest t with P(T <= t) = p. Bisection; the CDF is
// strictly increasing so 200 halvings pin the root well past double
// precision needs.
inline double student_t_quantile(double p, double nu) {
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("student_t_quantile: p must be in (0,1)");
  }
  if (p == 0.5) return 0.0;
  double lo = -1e8, hi = 1e8;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, nu) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// P(F > f) for an F statistic with (df1, df2) degrees of freedom.
inline double f_sf(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  return incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

// ---------------------------------------------------------------------------
// Stable 64-bit hashing for seed derivation. std::hash is not pinned across
// implementations, so run reproducibility needs its own mixer.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t v) {
  return splitmix64(seed ^ splitmix64(v));
}

}  // namespace votkit

#endif  // VOTKIT_NUMERIC_HPP
