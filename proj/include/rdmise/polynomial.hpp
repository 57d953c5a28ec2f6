#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

#include "rdmise/errors.hpp"
#include "rdmise/interval.hpp"

namespace rdmise {

/// Sparse polynomial of degree <= 2:
///   c + sum_i a_i v_i + sum_{i<=j} b_ij v_i v_j
///
/// Var is any totally ordered id type. Quadratic keys are stored with
/// first <= second; pure squares have first == second. Coefficients with
/// magnitude below kDropTolerance are removed after every operation.
template <typename Var>
class QuadraticPoly {
 public:
  using VarPair = std::pair<Var, Var>;
  static constexpr double kDropTolerance = 1e-14;

  QuadraticPoly() = default;
  explicit QuadraticPoly(double constant) : constant_(clean(constant)) {}

  static QuadraticPoly variable(Var v, double coeff = 1.0) {
    QuadraticPoly p;
    p.add_linear(v, coeff);
    return p;
  }

  double constant() const { return constant_; }
  const std::map<Var, double>& linear() const { return linear_; }
  const std::map<VarPair, double>& quadratic() const { return quadratic_; }

  double linear_coeff(Var v) const {
    auto it = linear_.find(v);
    return it == linear_.end() ? 0.0 : it->second;
  }

  double quadratic_coeff(Var u, Var v) const {
    auto it = quadratic_.find(ordered(u, v));
    return it == quadratic_.end() ? 0.0 : it->second;
  }

  int degree() const {
    if (!quadratic_.empty()) return 2;
    if (!linear_.empty()) return 1;
    return 0;
  }

  bool is_constant() const { return linear_.empty() && quadratic_.empty(); }
  bool is_zero() const { return is_constant() && constant_ == 0.0; }

  /// Sorted, duplicate-free list of variables with a nonzero coefficient.
  std::vector<Var> variables() const {
    std::vector<Var> out;
    for (const auto& [v, c] : linear_) out.push_back(v);
    for (const auto& [uv, c] : quadratic_) {
      out.push_back(uv.first);
      out.push_back(uv.second);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  QuadraticPoly& add_constant(double c) {
    constant_ = clean(constant_ + c);
    return *this;
  }

  QuadraticPoly& add_linear(Var v, double c) {
    accumulate(linear_, v, c);
    return *this;
  }

  QuadraticPoly& add_quadratic(Var u, Var v, double c) {
    accumulate(quadratic_, ordered(u, v), c);
    return *this;
  }

  QuadraticPoly operator-() const { return *this * -1.0; }

  QuadraticPoly& operator+=(const QuadraticPoly& o) {
    add_constant(o.constant_);
    for (const auto& [v, c] : o.linear_) add_linear(v, c);
    for (const auto& [uv, c] : o.quadratic_) accumulate(quadratic_, uv, c);
    return *this;
  }

  QuadraticPoly& operator-=(const QuadraticPoly& o) { return *this += -o; }

  QuadraticPoly& operator*=(double k) {
    constant_ = clean(constant_ * k);
    scale(linear_, k);
    scale(quadratic_, k);
    return *this;
  }

  friend QuadraticPoly operator+(QuadraticPoly a, const QuadraticPoly& b) { return a += b; }
  friend QuadraticPoly operator-(QuadraticPoly a, const QuadraticPoly& b) { return a -= b; }
  friend QuadraticPoly operator*(QuadraticPoly a, double k) { return a *= k; }
  friend QuadraticPoly operator*(double k, QuadraticPoly a) { return a *= k; }
  friend QuadraticPoly operator+(QuadraticPoly a, double k) { return a.add_constant(k); }
  friend QuadraticPoly operator+(double k, QuadraticPoly a) { return a.add_constant(k); }
  friend QuadraticPoly operator-(QuadraticPoly a, double k) { return a.add_constant(-k); }
  friend QuadraticPoly operator-(double k, const QuadraticPoly& a) { return (-a).add_constant(k); }

  /// Polynomial product; throws DegreeOverflow when the result would exceed degree 2.
  friend QuadraticPoly operator*(const QuadraticPoly& a, const QuadraticPoly& b) {
    if (a.degree() + b.degree() > 2) throw DegreeOverflow();
    QuadraticPoly out(a.constant_ * b.constant_);
    for (const auto& [v, c] : a.linear_) out.add_linear(v, c * b.constant_);
    for (const auto& [v, c] : b.linear_) out.add_linear(v, c * a.constant_);
    for (const auto& [uv, c] : a.quadratic_) out.accumulate(out.quadratic_, uv, c * b.constant_);
    for (const auto& [uv, c] : b.quadratic_) out.accumulate(out.quadratic_, uv, c * a.constant_);
    for (const auto& [u, cu] : a.linear_) {
      for (const auto& [v, cv] : b.linear_) out.add_quadratic(u, v, cu * cv);
    }
    return out;
  }

  friend bool operator==(const QuadraticPoly&, const QuadraticPoly&) = default;

  /// Point evaluation; value_of(Var) -> double.
  template <typename F>
  double evaluate(F&& value_of) const {
    double s = constant_;
    for (const auto& [v, c] : linear_) s += c * value_of(v);
    for (const auto& [uv, c] : quadratic_) {
      const double x = value_of(uv.first);
      s += uv.first == uv.second ? c * x * x : c * x * value_of(uv.second);
    }
    return s;
  }

  /// Natural interval extension term by term; pure squares use sqr().
  template <typename F>
  Interval evaluate_interval(F&& interval_of) const {
    Interval s(constant_);
    for (const auto& [v, c] : linear_) s += c * interval_of(v);
    for (const auto& [uv, c] : quadratic_) {
      const Interval x = interval_of(uv.first);
      s += uv.first == uv.second ? c * sqr(x) : c * (x * interval_of(uv.second));
    }
    return s;
  }

  /// d/dv at a point.
  template <typename F>
  double derivative(Var v, F&& value_of) const {
    double d = linear_coeff(v);
    for (const auto& [uv, c] : quadratic_) {
      if (uv.first == v && uv.second == v) {
        d += 2.0 * c * value_of(v);
      } else if (uv.first == v) {
        d += c * value_of(uv.second);
      } else if (uv.second == v) {
        d += c * value_of(uv.first);
      }
    }
    return d;
  }

  /// d/dv over a box, natural interval extension.
  template <typename F>
  Interval derivative_interval(Var v, F&& interval_of) const {
    Interval d(linear_coeff(v));
    for (const auto& [uv, c] : quadratic_) {
      if (uv.first == v && uv.second == v) {
        d += (2.0 * c) * interval_of(v);
      } else if (uv.first == v) {
        d += c * interval_of(uv.second);
      } else if (uv.second == v) {
        d += c * interval_of(uv.first);
      }
    }
    return d;
  }

  /// Substitute each variable by an affine form: v -> offset(v) + scale(v) * w(v).
  /// map(Var) must return std::tuple<double offset, double scale, OutVar w>.
  template <typename OutVar, typename F>
  QuadraticPoly<OutVar> substitute_affine(F&& map) const {
    using Out = QuadraticPoly<OutVar>;
    Out out(constant_);
    for (const auto& [v, c] : linear_) {
      const auto [off, sc, w] = map(v);
      out += Out(c * off) + Out::variable(w, c * sc);
    }
    for (const auto& [uv, c] : quadratic_) {
      const auto [off1, sc1, w1] = map(uv.first);
      const auto [off2, sc2, w2] = map(uv.second);
      const Out f1 = Out(off1) + Out::variable(w1, sc1);
      const Out f2 = Out(off2) + Out::variable(w2, sc2);
      out += (f1 * f2) * c;
    }
    return out;
  }

 private:
  static VarPair ordered(Var u, Var v) { return v < u ? VarPair{v, u} : VarPair{u, v}; }
  static double clean(double c) { return std::abs(c) < kDropTolerance ? 0.0 : c; }

  template <typename Key>
  static void accumulate(std::map<Key, double>& m, const Key& k, double c) {
    const double sum = m[k] + c;
    if (std::abs(sum) < kDropTolerance) {
      m.erase(k);
    } else {
      m[k] = sum;
    }
  }

  template <typename Key>
  static void scale(std::map<Key, double>& m, double k) {
    for (auto it = m.begin(); it != m.end();) {
      it->second *= k;
      if (std::abs(it->second) < kDropTolerance) {
        it = m.erase(it);
      } else {
        ++it;
      }
    }
  }

  double constant_ = 0.0;
  std::map<Var, double> linear_;
  std::map<VarPair, double> quadratic_;
};

template <typename Var>
std::ostream& operator<<(std::ostream& os, const QuadraticPoly<Var>& p) {
  os << p.constant();
  for (const auto& [v, c] : p.linear()) os << " + " << c << "*" << v;
  for (const auto& [uv, c] : p.quadratic()) os << " + " << c << "*" << uv.first << "*" << uv.second;
  return os;
}

}  // namespace rdmise
