#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "rdmise/errors.hpp"
#include "rdmise/interval.hpp"
#include "rdmise/polynomial.hpp"

namespace rdmise {

/// Index of an RDM variable alpha in [0, 1]. Two expressions that share an
/// id are correlated through it.
struct RdmVarId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(RdmVarId, RdmVarId) = default;
};

inline std::ostream& operator<<(std::ostream& os, RdmVarId id) {
  return os << "a" << id.value;
}

/// A value with tracked correlations: a degree <= 2 polynomial over RDM
/// variables, each ranging over [0, 1].
using RdmExpr = QuadraticPoly<RdmVarId>;

/// Per-problem binding of RDM variables to the intervals they parameterize.
/// Single writer while the problem is being built.
class RdmRegistry {
 public:
  /// x_lo + (x_hi - x_lo) * alpha_id. Rebinding an id to the same interval
  /// is allowed; to a different one throws RdmVarRebound.
  RdmExpr lift(const Interval& x, RdmVarId id) {
    auto [it, inserted] = bindings_.try_emplace(id, x);
    if (!inserted && !(it->second == x)) {
      throw RdmVarRebound("RDM variable a" + std::to_string(id.value) +
                          " is already bound to a different interval");
    }
    RdmExpr e(x.lo());
    e.add_linear(id, x.width());
    return e;
  }

  /// Lift under the next unused id.
  RdmExpr lift(const Interval& x) { return lift(x, fresh_id()); }

  RdmVarId fresh_id() const {
    return bindings_.empty() ? RdmVarId{0} : RdmVarId{bindings_.rbegin()->first.value + 1};
  }

  const Interval* binding(RdmVarId id) const {
    auto it = bindings_.find(id);
    return it == bindings_.end() ? nullptr : &it->second;
  }

  std::size_t size() const { return bindings_.size(); }

 private:
  std::map<RdmVarId, Interval> bindings_;
};

inline RdmExpr rdm_lift(const Interval& x, RdmVarId id, RdmRegistry& registry) {
  return registry.lift(x, id);
}

inline RdmExpr rdm_add(const RdmExpr& a, const RdmExpr& b) { return a + b; }
inline RdmExpr rdm_sub(const RdmExpr& a, const RdmExpr& b) { return a - b; }
inline RdmExpr rdm_mul(const RdmExpr& a, const RdmExpr& b) { return a * b; }

struct SpanOptions {
  std::size_t max_vars = 16;
  // Outward widening of both endpoints, for soundness-critical callers.
  double widen = 0.0;
};

namespace detail {

// Solve M y = r in place by Gaussian elimination with partial pivoting.
// Returns false when M is (numerically) singular.
inline bool solve_dense(std::vector<std::vector<double>>& m, std::vector<double>& r) {
  const std::size_t n = r.size();
  double scale = 0.0;
  for (const auto& row : m)
    for (double v : row) scale = std::max(scale, std::abs(v));
  const double tiny = 1e-13 * std::max(scale, 1.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < n; ++i)
      if (std::abs(m[i][col]) > std::abs(m[piv][col])) piv = i;
    if (std::abs(m[piv][col]) <= tiny) return false;
    std::swap(m[piv], m[col]);
    std::swap(r[piv], r[col]);
    for (std::size_t i = col + 1; i < n; ++i) {
      const double f = m[i][col] / m[col][col];
      if (f == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) m[i][j] -= f * m[col][j];
      r[i] -= f * r[col];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = r[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= m[i][j] * r[j];
    r[i] = s / m[i][i];
  }
  return true;
}

}  // namespace detail

/// Exact [min, max] of e over the unit box [0,1]^k.
///
/// Variables without a pure-square term enter affinely once the others are
/// fixed, so they are only tried at 0 and 1. Variables with a square term
/// are tried at 0, 1, and free; for every such assignment the free block is
/// solved for its stationary point (a small linear system) and kept if it
/// lies inside the box. This enumerates all KKT candidates of a quadratic
/// over a box.
inline Interval rdm_span(const RdmExpr& e, SpanOptions opts = {}) {
  const std::vector<RdmVarId> vars = e.variables();
  const std::size_t k = vars.size();
  if (k > opts.max_vars) throw TooManyRdmVars(k, opts.max_vars);
  if (k == 0) return Interval(e.constant()).inflate(opts.widen);

  std::map<RdmVarId, std::size_t> pos;
  for (std::size_t i = 0; i < k; ++i) pos[vars[i]] = i;

  // f(a) = c + g.a + a'Qa with Q symmetric.
  const double c = e.constant();
  std::vector<double> g(k, 0.0);
  std::vector<std::vector<double>> q(k, std::vector<double>(k, 0.0));
  for (const auto& [v, coef] : e.linear()) g[pos[v]] = coef;
  for (const auto& [uv, coef] : e.quadratic()) {
    const std::size_t i = pos[uv.first];
    const std::size_t j = pos[uv.second];
    if (i == j) {
      q[i][i] += coef;
    } else {
      q[i][j] += 0.5 * coef;
      q[j][i] += 0.5 * coef;
    }
  }
  std::vector<bool> has_square(k);
  for (std::size_t i = 0; i < k; ++i) has_square[i] = q[i][i] != 0.0;

  auto value_at = [&](const std::vector<double>& a) {
    double s = c;
    for (std::size_t i = 0; i < k; ++i) {
      s += g[i] * a[i];
      for (std::size_t j = 0; j < k; ++j) s += a[i] * q[i][j] * a[j];
    }
    return s;
  };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  // state: 0 -> at 0, 1 -> at 1, 2 -> free (squares only)
  std::vector<int> state(k, 0);
  std::vector<double> a(k, 0.0);
  std::vector<std::size_t> free_idx;
  for (;;) {
    free_idx.clear();
    for (std::size_t i = 0; i < k; ++i) {
      if (state[i] == 2) {
        free_idx.push_back(i);
      } else {
        a[i] = state[i];
      }
    }
    bool ok = true;
    if (!free_idx.empty()) {
      const std::size_t nf = free_idx.size();
      std::vector<std::vector<double>> m(nf, std::vector<double>(nf));
      std::vector<double> r(nf);
      for (std::size_t p = 0; p < nf; ++p) {
        const std::size_t i = free_idx[p];
        double rhs = -g[i];
        for (std::size_t j = 0; j < k; ++j) {
          if (state[j] != 2) rhs -= 2.0 * q[i][j] * a[j];
        }
        r[p] = rhs;
        for (std::size_t s = 0; s < nf; ++s) m[p][s] = 2.0 * q[i][free_idx[s]];
      }
      ok = detail::solve_dense(m, r);
      if (ok) {
        for (std::size_t p = 0; p < nf; ++p) {
          if (r[p] < -1e-12 || r[p] > 1.0 + 1e-12) {
            ok = false;
            break;
          }
          a[free_idx[p]] = std::clamp(r[p], 0.0, 1.0);
        }
      }
    }
    if (ok) {
      const double v = value_at(a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }

    // next assignment (mixed radix: 2 for affine vars, 3 for squares)
    std::size_t i = 0;
    for (; i < k; ++i) {
      const int radix = has_square[i] ? 3 : 2;
      if (++state[i] < radix) break;
      state[i] = 0;
    }
    if (i == k) break;
  }
  return Interval(lo, hi).inflate(opts.widen);
}

}  // namespace rdmise
