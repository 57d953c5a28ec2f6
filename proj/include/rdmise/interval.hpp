#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>

#include "rdmise/errors.hpp"

namespace rdmise {

/// Closed real interval [lo, hi] with lo <= hi.
///
/// Plain double endpoints without directed rounding. Callers on soundness
/// critical paths widen results with inflate().
class Interval {
 public:
  constexpr Interval() noexcept = default;
  constexpr explicit Interval(double value) noexcept : lo_(value), hi_(value) {}

  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo <= hi)) {
      throw InvalidInterval("invalid interval [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "]");
    }
  }

  static Interval hull(double a, double b) { return {std::min(a, b), std::max(a, b)}; }
  static Interval unit() { return {0.0, 1.0}; }

  constexpr double lo() const noexcept { return lo_; }
  constexpr double hi() const noexcept { return hi_; }
  constexpr double width() const noexcept { return hi_ - lo_; }
  constexpr double mid() const noexcept { return lo_ + 0.5 * (hi_ - lo_); }
  constexpr double mag() const noexcept { return std::max(std::abs(lo_), std::abs(hi_)); }
  constexpr bool is_degenerate() const noexcept { return lo_ == hi_; }

  constexpr bool contains(double x) const noexcept { return lo_ <= x && x <= hi_; }
  constexpr bool contains(const Interval& other) const noexcept {
    return lo_ <= other.lo_ && other.hi_ <= hi_;
  }
  constexpr bool contains_zero() const noexcept { return lo_ <= 0.0 && 0.0 <= hi_; }

  Interval inflate(double eps) const { return {lo_ - eps, hi_ + eps}; }

  friend constexpr bool operator==(const Interval&, const Interval&) = default;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

inline Interval operator+(const Interval& a, const Interval& b) {
  return {a.lo() + b.lo(), a.hi() + b.hi()};
}

inline Interval operator-(const Interval& a) { return {-a.hi(), -a.lo()}; }

inline Interval operator-(const Interval& a, const Interval& b) {
  return {a.lo() - b.hi(), a.hi() - b.lo()};
}

inline Interval operator*(const Interval& a, const Interval& b) {
  const double p1 = a.lo() * b.lo();
  const double p2 = a.lo() * b.hi();
  const double p3 = a.hi() * b.lo();
  const double p4 = a.hi() * b.hi();
  return {std::min({p1, p2, p3, p4}), std::max({p1, p2, p3, p4})};
}

inline Interval operator/(const Interval& a, const Interval& b) {
  if (b.contains_zero()) throw DivisionByIntervalContainingZero();
  const double q1 = a.lo() / b.lo();
  const double q2 = a.lo() / b.hi();
  const double q3 = a.hi() / b.lo();
  const double q4 = a.hi() / b.hi();
  return {std::min({q1, q2, q3, q4}), std::max({q1, q2, q3, q4})};
}

inline Interval operator+(const Interval& a, double b) { return a + Interval(b); }
inline Interval operator+(double a, const Interval& b) { return Interval(a) + b; }
inline Interval operator-(const Interval& a, double b) { return a - Interval(b); }
inline Interval operator-(double a, const Interval& b) { return Interval(a) - b; }

inline Interval operator*(double k, const Interval& a) {
  return k >= 0.0 ? Interval(k * a.lo(), k * a.hi()) : Interval(k * a.hi(), k * a.lo());
}
inline Interval operator*(const Interval& a, double k) { return k * a; }

inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }
inline Interval& operator-=(Interval& a, const Interval& b) { return a = a - b; }

// Named forms of the four base operations.
inline Interval interval_add(const Interval& a, const Interval& b) { return a + b; }
inline Interval interval_sub(const Interval& a, const Interval& b) { return a - b; }
inline Interval interval_mul(const Interval& a, const Interval& b) { return a * b; }
inline Interval interval_div(const Interval& a, const Interval& b) { return a / b; }

/// Tight enclosure of {x^2 : x in a}; narrower than a * a when 0 is interior.
inline Interval sqr(const Interval& a) {
  const double l2 = a.lo() * a.lo();
  const double h2 = a.hi() * a.hi();
  if (a.contains_zero()) return {0.0, std::max(l2, h2)};
  return {std::min(l2, h2), std::max(l2, h2)};
}

/// Square root of the nonnegative part of a; nullopt when a < 0 entirely.
inline std::optional<Interval> sqrt_nonneg(const Interval& a) {
  if (a.hi() < 0.0) return std::nullopt;
  return Interval(std::sqrt(std::max(a.lo(), 0.0)), std::sqrt(a.hi()));
}

inline std::optional<Interval> intersect(const Interval& a, const Interval& b) {
  const double lo = std::max(a.lo(), b.lo());
  const double hi = std::min(a.hi(), b.hi());
  if (lo > hi) return std::nullopt;
  return Interval(lo, hi);
}

inline Interval hull(const Interval& a, const Interval& b) {
  return {std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi())};
}

inline std::ostream& operator<<(std::ostream& os, const Interval& a) {
  return os << '[' << a.lo() << ", " << a.hi() << ']';
}

}  // namespace rdmise
