#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rdmise/equations.hpp"
#include "rdmise/errors.hpp"
#include "rdmise/lp.hpp"
#include "rdmise/parallel.hpp"
#include "rdmise/rdm.hpp"
#include "rdmise/result.hpp"

namespace rdmise {

enum class QuadraticRelaxation { mean_value_only, mean_value_plus_envelopes };
enum class ExpansionPoint { infimum, midpoint };

struct ContractorConfig {
  double width_tolerance = 1e-6;
  int max_iterations = 50;
  double lp_epsilon = 1e-9;
  QuadraticRelaxation quadratic_relaxation = QuadraticRelaxation::mean_value_plus_envelopes;
  ExpansionPoint expansion = ExpansionPoint::infimum;
  // Parallel LP solves; results do not depend on this.
  unsigned threads = 1;
  // Per-variable LPs are warm-started in chains of this many variables.
  std::size_t block_size = 128;
  // Optional external solver; the bundled simplex when null.
  const LpBackend* backend = nullptr;
  // Called with the box after every completed iteration.
  std::function<void(int, const std::vector<Interval>&)> observer;

  void validate() const {
    if (!(width_tolerance > 0.0) || !(lp_epsilon > 0.0)) throw Error("contractor tolerances must be > 0");
    if (max_iterations < 1) throw Error("max_iterations must be >= 1");
    if (block_size < 1) throw Error("block_size must be >= 1");
  }
};

/// One sparse row lo <= sum coef * col <= hi over LP columns.
struct LinearRow {
  std::vector<std::pair<std::size_t, double>> coeffs;
  double lo = 0.0;
  double hi = 0.0;
};

/// LP template in alpha space. Columns [0, alpha_columns.size()) are the
/// alphas of non-degenerate quantities; the rest are squared-alpha
/// auxiliaries, square_of[c] naming the alpha column they square.
struct Linearization {
  std::vector<std::size_t> alpha_columns;   // column -> quantity index
  std::vector<std::size_t> square_of;       // aux column - alpha count -> alpha column
  std::vector<LinearRow> rows;
  bool empty = false;  // a row with no coefficients excludes zero
  std::string empty_reason;

  std::size_t num_columns() const { return alpha_columns.size() + square_of.size(); }
};

namespace detail {

inline void finish_row(LinearRow& row, double lo, double hi, Linearization& out, std::size_t residual) {
  double scale = 0.0;
  for (const auto& [c, a] : row.coeffs) scale = std::max(scale, std::abs(a));
  if (scale < 1e-13) {
    if (lo > 0.0 || hi < 0.0) {
      out.empty = true;
      out.empty_reason = "residual " + std::to_string(residual) + " cannot vanish on the box";
    }
    return;
  }
  for (auto& [c, a] : row.coeffs) a /= scale;
  row.lo = lo / scale;
  row.hi = hi / scale;
  out.rows.push_back(std::move(row));
}

}  // namespace detail

/// Mean-value linearization of every residual over the box:
///   sum_j A_j alpha_j in -g(t) + sum_j A_j t_j - sum_j (dg_j([0,1]) - A_j) [-t_j, 1 - t_j]
/// with A_j = dg/dalpha_j at the expansion point t (0 for the infimum corner,
/// 1/2 for the midpoint). With envelopes on, pure squares b alpha_j^2 move to
/// auxiliary columns s_j = alpha_j^2 and only bilinear terms stay in the
/// remainder; every s_j gets max(0, 2 alpha_j - 1) <= s_j <= alpha_j.
inline Linearization linearize(const ResidualSystem& sys, const std::vector<Interval>& box,
                               const ContractorConfig& cfg) {
  Linearization lin;
  std::vector<std::optional<std::size_t>> col_of(box.size());
  for (std::size_t j = 0; j < box.size(); ++j) {
    if (box[j].width() > 0.0) {
      col_of[j] = lin.alpha_columns.size();
      lin.alpha_columns.push_back(j);
    }
  }
  const std::size_t na = lin.alpha_columns.size();
  const bool envelopes = cfg.quadratic_relaxation == QuadraticRelaxation::mean_value_plus_envelopes;
  const double t = cfg.expansion == ExpansionPoint::midpoint ? 0.5 : 0.0;
  std::map<std::size_t, std::size_t> aux_of;  // alpha column -> aux column

  const std::vector<RdmExpr> exprs = sys.bind_rdm(box);
  for (std::size_t i = 0; i < exprs.size(); ++i) {
    RdmExpr r = exprs[i];
    LinearRow row;
    if (envelopes) {
      for (const auto& [uv, b] : exprs[i].quadratic()) {
        if (!(uv.first == uv.second)) continue;
        const std::size_t col = *col_of[uv.first.value];
        auto [it, inserted] = aux_of.try_emplace(col, na + aux_of.size());
        row.coeffs.push_back({it->second, b});
        r.add_quadratic(uv.first, uv.second, -b);
      }
    }
    auto at_t = [t](RdmVarId) { return t; };
    auto unit = [](RdmVarId) { return Interval::unit(); };
    double lo = -r.evaluate(at_t);
    double hi = lo;
    const Interval shift(-t, 1.0 - t);
    for (RdmVarId v : r.variables()) {
      const double a = r.derivative(v, at_t);
      if (a != 0.0) {
        row.coeffs.push_back({*col_of[v.value], a});
        lo += a * t;
        hi += a * t;
      }
      const Interval rem = (r.derivative_interval(v, unit) - a) * shift;
      lo -= rem.hi();
      hi -= rem.lo();
    }
    std::sort(row.coeffs.begin(), row.coeffs.end());
    detail::finish_row(row, lo - cfg.lp_epsilon, hi + cfg.lp_epsilon, lin, i);
  }
  lin.square_of.resize(aux_of.size());
  for (const auto& [alpha, aux] : aux_of) {
    lin.square_of[aux - na] = alpha;
    // s - alpha <= 0 and 2 alpha - s <= 1
    lin.rows.push_back({{{alpha, -1.0}, {aux, 1.0}}, -kLpInfinity, 0.0});
    lin.rows.push_back({{{alpha, 2.0}, {aux, -1.0}}, -kLpInfinity, 1.0});
  }
  return lin;
}

inline LpProblem to_lp(const Linearization& lin) {
  LpProblem p;
  const std::size_t n = lin.num_columns();
  p.var_bounds.assign(n, {0.0, 1.0});
  p.objective.assign(n, 0.0);
  p.constraint_matrix.reserve(lin.rows.size());
  for (const LinearRow& r : lin.rows) {
    std::vector<double> dense(n, 0.0);
    for (const auto& [c, a] : r.coeffs) dense[c] += a;
    p.constraint_matrix.push_back(std::move(dense));
    p.constraint_rhs.push_back(r.hi);
    p.constraint_lower.push_back(r.lo);
  }
  return p;
}

struct ContractionStep {
  std::vector<Interval> box;
  bool any_progress = false;
};

namespace detail {

inline constexpr double kAlphaMargin = 1e-9;

struct AlphaBounds {
  double lo = 0.0;
  double hi = 1.0;
};

}  // namespace detail

/// One LP sweep: min and max of every alpha over the shared linearization.
/// Throws EmptySolutionSet when the LP feasible set is empty.
inline ContractionStep contract_once(const ResidualSystem& sys, const std::vector<Interval>& box,
                                     const ContractorConfig& cfg) {
  const Linearization lin = linearize(sys, box, cfg);
  if (lin.empty) throw EmptySolutionSet(lin.empty_reason);
  const SimplexBackend simplex;
  const LpBackend& backend = cfg.backend ? *cfg.backend : simplex;
  const LpProblem lp = to_lp(lin);
  const std::unique_ptr<LpSession> base = backend.open(lp);
  if (!base->feasible()) throw EmptySolutionSet("linearized measurement constraints are infeasible");

  const std::size_t na = lin.alpha_columns.size();
  const std::size_t n = lin.num_columns();
  std::vector<bool> used(n, false);
  for (const LinearRow& r : lin.rows)
    for (const auto& [c, a] : r.coeffs)
      if (a != 0.0) used[c] = true;

  std::vector<detail::AlphaBounds> result(na);
  const std::vector<double> start = base->current_point();
  const std::size_t blocks = (na + cfg.block_size - 1) / cfg.block_size;
  parallel_for(blocks, cfg.threads, [&](std::size_t blk) {
    std::unique_ptr<LpSession> s = base->clone();
    std::vector<bool> at0(na, false), at1(na, false);
    auto note = [&](const std::vector<double>& x) {
      for (std::size_t j = 0; j < na; ++j) {
        if (x[j] <= 1e-12) at0[j] = true;
        if (x[j] >= 1.0 - 1e-12) at1[j] = true;
      }
    };
    note(start);
    std::vector<double> c(n, 0.0);
    const std::size_t end = std::min(na, (blk + 1) * cfg.block_size);
    // All minimizations first, then all maximizations: consecutive optima
    // tend to be close, which keeps the warm starts short.
    for (LpSense sense : {LpSense::minimize, LpSense::maximize}) {
      const bool minimize = sense == LpSense::minimize;
      for (std::size_t j = blk * cfg.block_size; j < end; ++j) {
        if (!used[j] || (minimize ? at0[j] : at1[j])) continue;
        c[j] = 1.0;
        const LpSolution sol = s->optimize(c, sense);
        c[j] = 0.0;
        if (sol.status != LpStatus::optimal) continue;
        if (minimize) {
          result[j].lo = std::max(0.0, sol.objective_value - detail::kAlphaMargin);
        } else {
          result[j].hi = std::min(1.0, sol.objective_value + detail::kAlphaMargin);
        }
        note(sol.point);
      }
    }
  });

  ContractionStep step;
  step.box = box;
  for (std::size_t col = 0; col < na; ++col) {
    const std::size_t j = lin.alpha_columns[col];
    const Interval& old = box[j];
    const double w = old.width();
    const auto [alo, ahi] = result[col];
    if (alo > ahi) continue;  // numerically crossed; keep the old bounds
    const double lo = alo > 0.0 ? std::min(old.hi(), old.lo() + alo * w) : old.lo();
    const double hi = ahi < 1.0 ? std::max(old.lo(), old.lo() + ahi * w) : old.hi();
    if (lo > hi) continue;
    step.box[j] = Interval(lo, hi);
    if (w - step.box[j].width() > cfg.width_tolerance) step.any_progress = true;
  }
  return step;
}

/// Iterates contract_once until the average state and measurement widths
/// both change by at most width_tolerance, the iteration limit, or an empty
/// set. Never throws EmptySolutionSet; it is reported through the status.
inline ContractionResult run_contractor(const ResidualSystem& sys, std::vector<Interval> box,
                                        const ContractorConfig& cfg = {}) {
  cfg.validate();
  ContractionResult res;
  WidthSample prev = average_widths(sys, box);
  res.width_history.push_back(prev);
  res.status = ContractionStatus::iteration_limit;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    res.iterations_used = it;
    try {
      box = contract_once(sys, box, cfg).box;
    } catch (const EmptySolutionSet& e) {
      res.status = ContractionStatus::empty_set;
      res.message = e.what();
      res.empty_iteration = it;
      break;
    }
    if (cfg.observer) cfg.observer(it, box);
    const WidthSample now = average_widths(sys, box);
    res.width_history.push_back(now);
    const bool settled = prev.state - now.state <= cfg.width_tolerance &&
                         prev.measurement - now.measurement <= cfg.width_tolerance;
    prev = now;
    if (settled) {
      res.status = ContractionStatus::converged;
      break;
    }
  }
  res.final_box = box;
  res.final_states = sys.state_box(box);
  res.final_measurements = sys.measurement_intervals(box);
  return res;
}

/// Convenience overload from a state box and measurement set.
inline ContractionResult run_contractor(const ResidualSystem& sys, const StateBox& states,
                                        const MeasurementSet& meas, const ContractorConfig& cfg = {}) {
  return run_contractor(sys, sys.make_box(states, meas), cfg);
}

}  // namespace rdmise
