#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "rdmise/basis_factor.hpp"
#include "rdmise/errors.hpp"

namespace rdmise {

enum class LpSense { minimize, maximize };
enum class LpStatus { optimal, infeasible, numerical_failure };

inline constexpr double kLpInfinity = std::numeric_limits<double>::infinity();

/// LP with boxed variables (dense rows):
///   min/max objective . x
///   s.t. constraint_lower <= constraint_matrix * x <= constraint_rhs
///        var_bounds[j].first <= x_j <= var_bounds[j].second
///
/// constraint_lower may be left empty, in which case every row is a plain
/// row . x <= rhs. All variable bounds must be finite.
struct LpProblem {
  std::vector<double> objective;
  LpSense sense = LpSense::minimize;
  std::vector<std::vector<double>> constraint_matrix;
  std::vector<double> constraint_rhs;
  std::vector<double> constraint_lower;
  std::vector<std::pair<double, double>> var_bounds;

  std::size_t num_vars() const { return var_bounds.size(); }
  std::size_t num_rows() const { return constraint_matrix.size(); }

  double row_lower(std::size_t i) const {
    return constraint_lower.empty() ? -kLpInfinity : constraint_lower[i];
  }

  void validate() const {
    const std::size_t n = num_vars();
    if (!objective.empty() && objective.size() != n) {
      throw Error("LpProblem: objective has " + std::to_string(objective.size()) +
                  " entries for " + std::to_string(n) + " variables");
    }
    if (constraint_rhs.size() != constraint_matrix.size()) {
      throw Error("LpProblem: rhs size does not match row count");
    }
    if (!constraint_lower.empty() && constraint_lower.size() != constraint_matrix.size()) {
      throw Error("LpProblem: row lower bounds size does not match row count");
    }
    for (const auto& row : constraint_matrix) {
      if (row.size() != n) throw Error("LpProblem: ragged constraint row");
    }
    for (const auto& [lo, hi] : var_bounds) {
      if (!std::isfinite(lo) || !std::isfinite(hi) || lo > hi) {
        throw Error("LpProblem: variable bounds must be finite with lo <= hi");
      }
    }
  }
};

struct LpSolution {
  LpStatus status = LpStatus::numerical_failure;
  double objective_value = 0.0;
  std::vector<double> point;
};

struct SimplexOptions {
  std::size_t max_pivots = 1'000'000;
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  double pivot_tol = 1e-9;
  // Returned points must satisfy every row within this tolerance.
  double verify_tol = 1e-8;
  // Consecutive degenerate pivots before switching to Bland's rule.
  std::size_t degenerate_limit = 50;
};

/// One constraint set, many objectives. Sessions are cheap to clone so a
/// caller can fan out from a single feasible starting basis.
class LpSession {
 public:
  virtual ~LpSession() = default;
  virtual bool feasible() const = 0;
  /// A point satisfying the constraints; only meaningful when feasible().
  virtual std::vector<double> current_point() const = 0;
  virtual LpSolution optimize(std::span<const double> objective, LpSense sense) = 0;
  virtual std::unique_ptr<LpSession> clone() const = 0;
};

/// Abstract solver: LpProblem in, LpSolution out.
class LpBackend {
 public:
  virtual ~LpBackend() = default;
  virtual LpSolution solve(const LpProblem& problem) const = 0;
  /// Open a session over problem's constraints (its objective is ignored).
  /// The default re-solves from scratch on every optimize() call.
  virtual std::unique_ptr<LpSession> open(const LpProblem& problem) const;
};

namespace detail {

/// Bounded-variable revised primal simplex over a sparse LU basis.
///
/// Logical r_i = A_i . x carries the row bounds, giving the system
/// A x - r = 0 whose starting basis is all logicals. Pricing is Dantzig with
/// lowest-index ties; after a run of degenerate steps it falls back to
/// Bland's rule until progress resumes.
class BoundedSimplex {
 public:
  BoundedSimplex(const LpProblem& p, SimplexOptions opts) : opts_(opts), m_(p.num_rows()), n_(p.num_vars()) {
    p.validate();
    const std::size_t total = n_ + m_;
    auto cols = std::make_shared<std::vector<SparseVec>>(total);
    for (std::size_t i = 0; i < m_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        const double a = p.constraint_matrix[i][j];
        if (a != 0.0) (*cols)[j].push_back({i, a});
      }
      (*cols)[n_ + i].push_back({i, -1.0});
    }
    cols_ = std::move(cols);
    lo_.resize(total);
    hi_.resize(total);
    x_.assign(total, 0.0);
    at_upper_.assign(total, false);
    for (std::size_t j = 0; j < n_; ++j) {
      lo_[j] = p.var_bounds[j].first;
      hi_[j] = p.var_bounds[j].second;
      x_[j] = lo_[j];
    }
    for (std::size_t i = 0; i < m_; ++i) {
      lo_[n_ + i] = p.row_lower(i);
      hi_[n_ + i] = p.constraint_rhs[i];
    }
    basis_.resize(m_);
    position_.assign(total, npos);
    nonbasic_.resize(n_);
    for (std::size_t i = 0; i < m_; ++i) {
      basis_[i] = n_ + i;
      position_[n_ + i] = i;
    }
    for (std::size_t j = 0; j < n_; ++j) nonbasic_[j] = j;
    refactor();
    refresh_basic_values();
    feasible_ = !failed_ && phase_one();
  }

  bool feasible() const { return feasible_; }
  bool failed() const { return failed_; }

  std::vector<double> point() const { return {x_.begin(), x_.begin() + static_cast<long>(n_)}; }

  LpSolution optimize(std::span<const double> c, LpSense sense) {
    LpSolution sol;
    if (failed_) return sol;
    if (!feasible_) {
      sol.status = LpStatus::infeasible;
      return sol;
    }
    refresh_basic_values();
    if (max_infeasibility() > opts_.feasibility_tol && !phase_one()) {
      sol.status = failed_ ? LpStatus::numerical_failure : LpStatus::infeasible;
      return sol;
    }
    const double sign = sense == LpSense::minimize ? 1.0 : -1.0;
    cost_.assign(n_ + m_, 0.0);
    for (std::size_t j = 0; j < n_ && j < c.size(); ++j) cost_[j] = sign * c[j];
    if (!phase_two()) return sol;
    sol.point = point();
    if (!verify(sol.point)) return sol;
    double z = 0.0;
    for (std::size_t j = 0; j < n_ && j < c.size(); ++j) z += c[j] * sol.point[j];
    sol.objective_value = z;
    sol.status = LpStatus::optimal;
    return sol;
  }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  static constexpr std::size_t kRefactorEvery = 10;

  const SparseVec& column(std::size_t v) const { return (*cols_)[v]; }

  // Factorizes the current basis. Columns that leave it singular are
  // swapped for the logicals of the uncovered rows.
  void refactor() {
    for (int attempt = 0; attempt < 3; ++attempt) {
      std::vector<const SparseVec*> cols(m_);
      for (std::size_t k = 0; k < m_; ++k) cols[k] = &column(basis_[k]);
      const BasisFactor::Deficiency def = factor_.factorize(m_, cols);
      if (def.empty()) return;
      for (std::size_t t = 0; t < def.positions.size(); ++t) {
        const std::size_t k = def.positions[t];
        const std::size_t out = basis_[k];
        const std::size_t in = n_ + def.rows[t];
        const auto slot = std::find(nonbasic_.begin(), nonbasic_.end(), in);
        if (slot == nonbasic_.end()) break;
        at_upper_[out] = x_[out] - lo_[out] > hi_[out] - x_[out] || !std::isfinite(lo_[out]);
        x_[out] = at_upper_[out] ? hi_[out] : lo_[out];
        *slot = out;
        position_[out] = npos;
        basis_[k] = in;
        position_[in] = k;
      }
    }
    failed_ = true;
  }

  // x_B = -B^{-1} N x_N
  void refresh_basic_values() {
    a_.assign(m_, 0.0);
    for (std::size_t v : nonbasic_) {
      const double xv = x_[v];
      if (xv == 0.0) continue;
      for (const auto& [i, a] : column(v)) a_[i] -= a * xv;
    }
    factor_.ftran(a_, w_);
    for (std::size_t k = 0; k < m_; ++k) x_[basis_[k]] = w_[k];
  }

  double infeasibility(std::size_t var) const {
    if (x_[var] < lo_[var]) return lo_[var] - x_[var];
    if (x_[var] > hi_[var]) return x_[var] - hi_[var];
    return 0.0;
  }

  double max_infeasibility() const {
    double worst = 0.0;
    for (std::size_t v : basis_) worst = std::max(worst, infeasibility(v));
    return worst;
  }

  // d_k = cost[N_k] - y . a_{N_k} with y^T B = cost_B^T
  void reduced_costs_from(const std::vector<double>& cost) {
    z_.resize(m_);
    for (std::size_t k = 0; k < m_; ++k) z_[k] = cost[basis_[k]];
    factor_.btran(z_, y_);
    d_.resize(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t v = nonbasic_[k];
      double d = cost[v];
      for (const auto& [i, a] : column(v)) d -= y_[i] * a;
      d_[k] = d;
    }
  }

  // Entering slot and direction (+1 increase, -1 decrease); npos when optimal.
  std::pair<std::size_t, double> price() const {
    std::size_t best = npos;
    double best_score = 0.0;
    double dir = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t v = nonbasic_[k];
      if (lo_[v] == hi_[v]) continue;
      double score = 0.0;
      double sdir = 0.0;
      if (!at_upper_[v] && d_[k] < -opts_.optimality_tol) {
        score = -d_[k];
        sdir = 1.0;
      } else if (at_upper_[v] && d_[k] > opts_.optimality_tol) {
        score = d_[k];
        sdir = -1.0;
      } else {
        continue;
      }
      if (bland_) {
        if (best == npos || v < nonbasic_[best]) {
          best = k;
          dir = sdir;
        }
      } else if (score > best_score || (score == best_score && best != npos && v < nonbasic_[best])) {
        best = k;
        best_score = score;
        dir = sdir;
      }
    }
    return {best, dir};
  }

  struct Step {
    double length = kLpInfinity;
    std::size_t row = npos;  // npos: bound flip of the entering variable
    bool leave_at_upper = false;
  };

  // w_ holds B^{-1} a_q; basic k moves at rate -w_k * dir.
  Step ratio_test(std::size_t k, double dir, bool phase1) const {
    Step step;
    const std::size_t q = nonbasic_[k];
    step.length = hi_[q] - lo_[q];
    double best_rate = 0.0;
    const double ftol = opts_.feasibility_tol;
    for (std::size_t i = 0; i < m_; ++i) {
      const double rate = -w_[i] * dir;
      if (std::abs(rate) < opts_.pivot_tol) continue;
      const std::size_t v = basis_[i];
      const double x = x_[v];
      double limit = kLpInfinity;
      bool upper = false;
      if (phase1 && x < lo_[v] - ftol) {
        if (rate > 0.0) limit = (lo_[v] - x) / rate;
      } else if (phase1 && x > hi_[v] + ftol) {
        if (rate < 0.0) {
          limit = (x - hi_[v]) / -rate;
          upper = true;
        }
      } else if (rate < 0.0) {
        if (std::isfinite(lo_[v])) limit = std::max(0.0, (x - lo_[v]) / -rate);
      } else {
        if (std::isfinite(hi_[v])) {
          limit = std::max(0.0, (hi_[v] - x) / rate);
          upper = true;
        }
      }
      if (!std::isfinite(limit)) continue;
      bool take = false;
      if (limit < step.length - 1e-12) {
        take = true;
      } else if (limit <= step.length + 1e-12 && step.row != npos) {
        take = bland_ ? v < basis_[step.row] : std::abs(rate) > best_rate;
      }
      if (take) {
        step.length = limit;
        step.row = i;
        step.leave_at_upper = upper;
        best_rate = std::abs(rate);
      }
    }
    return step;
  }

  void load_column(std::size_t q) {
    a_.assign(m_, 0.0);
    for (const auto& [i, a] : column(q)) a_[i] = a;
    factor_.ftran(a_, w_);
  }

  void apply_step(std::size_t k, double dir, const Step& step) {
    const std::size_t q = nonbasic_[k];
    const double t = step.length;
    if (t != 0.0) {
      for (std::size_t i = 0; i < m_; ++i) {
        if (w_[i] != 0.0) x_[basis_[i]] -= w_[i] * dir * t;
      }
      x_[q] += dir * t;
    }
    basis_changed_ = step.row != npos;
    if (step.row == npos) {
      at_upper_[q] = dir > 0.0;
      x_[q] = at_upper_[q] ? hi_[q] : lo_[q];
      return;
    }
    const std::size_t r = step.row;
    const std::size_t p = basis_[r];
    at_upper_[p] = step.leave_at_upper;
    x_[p] = step.leave_at_upper ? hi_[p] : lo_[p];
    factor_.update(r, w_);
    basis_[r] = q;
    position_[q] = r;
    position_[p] = npos;
    nonbasic_[k] = p;
    if (factor_.num_updates() >= kRefactorEvery) {
      refactor();
      refresh_basic_values();
    }
  }

  void track_degeneracy(double length) {
    if (length <= 1e-12) {
      if (++degenerate_run_ > opts_.degenerate_limit) bland_ = true;
    } else {
      degenerate_run_ = 0;
      bland_ = false;
    }
  }

  // Minimize the sum of bound violations of the basic variables.
  bool phase_one() {
    std::vector<double> cost(n_ + m_, 0.0);
    bland_ = false;
    degenerate_run_ = 0;
    for (std::size_t iter = 0;; ++iter) {
      if (failed_ || iter > opts_.max_pivots) {
        failed_ = true;
        return false;
      }
      bool any = false;
      std::fill(cost.begin(), cost.end(), 0.0);
      for (std::size_t v : basis_) {
        if (x_[v] < lo_[v] - opts_.feasibility_tol) {
          cost[v] = -1.0;
          any = true;
        } else if (x_[v] > hi_[v] + opts_.feasibility_tol) {
          cost[v] = 1.0;
          any = true;
        }
      }
      if (!any) return true;
      reduced_costs_from(cost);
      const auto [k, dir] = price();
      if (k == npos) return false;
      load_column(nonbasic_[k]);
      const Step step = ratio_test(k, dir, true);
      if (!std::isfinite(step.length)) {
        failed_ = true;
        return false;
      }
      track_degeneracy(step.length);
      apply_step(k, dir, step);
    }
  }

  bool phase_two() {
    bland_ = false;
    degenerate_run_ = 0;
    for (std::size_t iter = 0;; ++iter) {
      if (failed_ || iter > opts_.max_pivots) return false;
      // A bound flip leaves the basis, and so the reduced costs, unchanged.
      if (iter == 0 || basis_changed_) reduced_costs_from(cost_);
      const auto [k, dir] = price();
      if (k == npos) return true;
      load_column(nonbasic_[k]);
      const Step step = ratio_test(k, dir, false);
      if (!std::isfinite(step.length)) return false;
      track_degeneracy(step.length);
      apply_step(k, dir, step);
    }
  }

  bool verify(const std::vector<double>& x) const {
    const double tol = opts_.verify_tol;
    for (std::size_t j = 0; j < n_; ++j) {
      if (x[j] < lo_[j] - tol || x[j] > hi_[j] + tol) return false;
    }
    std::vector<double> s(m_, 0.0), mag(m_, 0.0);
    for (std::size_t j = 0; j < n_; ++j) {
      for (const auto& [i, a] : column(j)) {
        s[i] += a * x[j];
        mag[i] += std::abs(a * x[j]);
      }
    }
    for (std::size_t i = 0; i < m_; ++i) {
      const double slack = tol * (1.0 + mag[i]);
      if (s[i] < lo_[n_ + i] - slack || s[i] > hi_[n_ + i] + slack) return false;
    }
    return true;
  }

  SimplexOptions opts_;
  std::size_t m_;
  std::size_t n_;
  // Structural columns, then the logical -e_i of every row.
  std::shared_ptr<const std::vector<SparseVec>> cols_;
  std::vector<double> lo_, hi_, x_;
  std::vector<char> at_upper_;
  std::vector<std::size_t> basis_, position_, nonbasic_;
  BasisFactor factor_;
  std::vector<double> d_, cost_;
  std::vector<double> a_, w_, z_, y_;  // scratch
  bool feasible_ = false;
  bool failed_ = false;
  bool bland_ = false;
  bool basis_changed_ = false;
  std::size_t degenerate_run_ = 0;
};

class SimplexSession final : public LpSession {
 public:
  SimplexSession(const LpProblem& p, SimplexOptions opts) : simplex_(p, opts) {}

  bool feasible() const override { return simplex_.feasible(); }
  std::vector<double> current_point() const override { return simplex_.point(); }
  LpSolution optimize(std::span<const double> objective, LpSense sense) override {
    return simplex_.optimize(objective, sense);
  }
  std::unique_ptr<LpSession> clone() const override {
    return std::make_unique<SimplexSession>(*this);
  }

  bool failed() const { return simplex_.failed(); }

 private:
  BoundedSimplex simplex_;
};

// Session over a backend that only knows how to solve whole problems.
class ResolvingSession final : public LpSession {
 public:
  ResolvingSession(const LpBackend& backend, LpProblem p) : backend_(&backend), problem_(std::move(p)) {
    problem_.objective.assign(problem_.num_vars(), 0.0);
    const LpSolution s = backend_->solve(problem_);
    feasible_ = s.status == LpStatus::optimal;
    point_ = s.point;
  }

  bool feasible() const override { return feasible_; }
  std::vector<double> current_point() const override { return point_; }
  LpSolution optimize(std::span<const double> objective, LpSense sense) override {
    problem_.objective.assign(objective.begin(), objective.end());
    problem_.sense = sense;
    return backend_->solve(problem_);
  }
  std::unique_ptr<LpSession> clone() const override {
    return std::make_unique<ResolvingSession>(*this);
  }

 private:
  const LpBackend* backend_;
  LpProblem problem_;
  bool feasible_ = false;
  std::vector<double> point_;
};

}  // namespace detail

inline std::unique_ptr<LpSession> LpBackend::open(const LpProblem& problem) const {
  return std::make_unique<detail::ResolvingSession>(*this, problem);
}

/// The bundled solver.
class SimplexBackend final : public LpBackend {
 public:
  explicit SimplexBackend(SimplexOptions opts = {}) : opts_(opts) {}

  LpSolution solve(const LpProblem& problem) const override {
    detail::BoundedSimplex s(problem, opts_);
    if (s.failed()) return {};
    if (!s.feasible()) return {LpStatus::infeasible, 0.0, {}};
    return s.optimize(problem.objective, problem.sense);
  }

  std::unique_ptr<LpSession> open(const LpProblem& problem) const override {
    return std::make_unique<detail::SimplexSession>(problem, opts_);
  }

 private:
  SimplexOptions opts_;
};

inline LpSolution solve_lp(const LpProblem& problem) { return SimplexBackend{}.solve(problem); }

}  // namespace rdmise
