#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdmise/equations.hpp"
#include "rdmise/errors.hpp"
#include "rdmise/interval.hpp"
#include "rdmise/result.hpp"

namespace rdmise {

struct IcpConfig {
  // A sweep in which no interval narrows by more than this ends the loop.
  double width_tolerance = 1e-6;
  int max_sweeps = 200;
  // Relative slack on every projection, covering rounding in the
  // floating-point interval operations.
  double epsilon = 1e-10;
  // Called with the box after every completed sweep.
  std::function<void(int, const std::vector<Interval>&)> observer;

  void validate() const {
    if (!(width_tolerance > 0.0) || !(epsilon >= 0.0)) throw Error("icp tolerances must be positive");
    if (max_sweeps < 1) throw Error("max_sweeps must be >= 1");
  }
};

namespace detail {

// One monomial of a residual: coeff, or coeff*u, or coeff*u*v (u == v for squares).
struct IcpTerm {
  enum Kind { constant, linear, square, bilinear } kind;
  double coeff;
  std::size_t u = 0, v = 0;
};

inline std::vector<IcpTerm> icp_terms(const QuantityPoly& p) {
  std::vector<IcpTerm> out;
  if (p.constant() != 0.0) out.push_back({IcpTerm::constant, p.constant()});
  for (const auto& [q, c] : p.linear()) out.push_back({IcpTerm::linear, c, q.value, q.value});
  for (const auto& [uv, c] : p.quadratic()) {
    const bool sq = uv.first == uv.second;
    out.push_back({sq ? IcpTerm::square : IcpTerm::bilinear, c, uv.first.value, uv.second.value});
  }
  return out;
}

inline Interval icp_eval(const IcpTerm& t, const std::vector<Interval>& box) {
  switch (t.kind) {
    case IcpTerm::constant: return Interval(t.coeff);
    case IcpTerm::linear: return t.coeff * box[t.u];
    case IcpTerm::square: return t.coeff * sqr(box[t.u]);
    case IcpTerm::bilinear: return t.coeff * (box[t.u] * box[t.v]);
  }
  return Interval(0.0);
}

class IcpNarrower {
 public:
  IcpNarrower(std::vector<Interval>& box, double eps, const std::string& where)
      : box_(box), eps_(eps), where_(where) {}

  void narrow(std::size_t j, const Interval& candidate) {
    const Interval padded(candidate.lo() - eps_ * (1.0 + std::abs(candidate.lo())),
                          candidate.hi() + eps_ * (1.0 + std::abs(candidate.hi())));
    const auto cut = intersect(box_[j], padded);
    if (!cut) throw EmptySolutionSet(where_ + ": empty intersection");
    box_[j] = *cut;
  }

  // x^2 in p, using the sign of x where the box fixes it.
  void narrow_square_root(std::size_t j, const Interval& p) {
    const auto root = sqrt_nonneg(p);
    if (!root) throw EmptySolutionSet(where_ + ": negative square");
    const Interval& x = box_[j];
    if (x.lo() >= 0.0) return narrow(j, *root);
    if (x.hi() <= 0.0) return narrow(j, -*root);
    // Sign unknown: keep the hull of the parts of x in either branch.
    const Interval pos = pad(*root), neg = pad(-*root);
    const auto a = intersect(x, neg), b = intersect(x, pos);
    if (!a && !b) throw EmptySolutionSet(where_ + ": empty intersection");
    box_[j] = a && b ? hull(*a, *b) : (a ? *a : *b);
  }

 private:
  Interval pad(const Interval& c) const {
    return {c.lo() - eps_ * (1.0 + std::abs(c.lo())), c.hi() + eps_ * (1.0 + std::abs(c.hi()))};
  }

  std::vector<Interval>& box_;
  double eps_;
  const std::string& where_;
};

/// Forward evaluation of sum(terms) = 0, then backward projection of the
/// complement onto every isolatable occurrence.
inline void hc4_revise(const std::vector<IcpTerm>& terms, std::vector<Interval>& box, double eps,
                       const std::string& where) {
  const std::size_t n = terms.size();
  if (n == 0) return;
  std::vector<Interval> value(n);
  double scale = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    value[t] = icp_eval(terms[t], box);
    scale += value[t].mag();
  }
  // prefix[t] = sum of terms before t, suffix[t] = sum from t on.
  std::vector<Interval> prefix(n + 1, Interval(0.0)), suffix(n + 1, Interval(0.0));
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + value[t];
  for (std::size_t t = n; t-- > 0;) suffix[t] = suffix[t + 1] + value[t];
  const double slack = eps * (1.0 + scale);
  if (prefix[n].lo() > slack || prefix[n].hi() < -slack) throw EmptySolutionSet(where + ": cannot vanish");

  IcpNarrower narrower(box, eps, where);
  for (std::size_t t = 0; t < n; ++t) {
    const IcpTerm& term = terms[t];
    if (term.kind == IcpTerm::constant) continue;
    const Interval rest = prefix[t] + suffix[t + 1];
    const Interval target(-rest.hi() - slack, -rest.lo() + slack);
    const auto own = intersect(icp_eval(term, box), target);
    if (!own) throw EmptySolutionSet(where + ": empty intersection");
    const Interval p = *own * (1.0 / term.coeff);
    switch (term.kind) {
      case IcpTerm::linear: narrower.narrow(term.u, p); break;
      case IcpTerm::square: narrower.narrow_square_root(term.u, p); break;
      case IcpTerm::bilinear:
        if (!box[term.v].contains_zero()) narrower.narrow(term.u, p / box[term.v]);
        if (!box[term.u].contains_zero()) narrower.narrow(term.v, p / box[term.u]);
        break;
      case IcpTerm::constant: break;
    }
  }
}

}  // namespace detail

/// HC4 interval constraint propagation over the residuals in canonical
/// order with classic interval arithmetic. Sweeps until no quantity narrows
/// by more than width_tolerance. An empty intersection is reported through
/// the empty_set status.
inline ContractionResult icp_contract(const ResidualSystem& sys, std::vector<Interval> box,
                                      const IcpConfig& cfg = {}) {
  cfg.validate();
  std::vector<std::vector<detail::IcpTerm>> terms;
  std::vector<std::string> names;
  for (const Residual& r : sys.equations()) {
    terms.push_back(detail::icp_terms(r.poly));
    names.push_back(std::string(residual_kind_name(r.kind)) + "@" + std::to_string(r.location) +
                    phase_char(r.phase));
  }

  ContractionResult res;
  res.width_history.push_back(average_widths(sys, box));
  res.status = ContractionStatus::iteration_limit;
  for (int sweep = 1; sweep <= cfg.max_sweeps; ++sweep) {
    res.iterations_used = sweep;
    const std::vector<Interval> before = box;
    try {
      for (std::size_t i = 0; i < terms.size(); ++i) detail::hc4_revise(terms[i], box, cfg.epsilon, names[i]);
    } catch (const EmptySolutionSet& e) {
      box = before;
      res.status = ContractionStatus::empty_set;
      res.message = e.what();
      res.empty_iteration = sweep;
      break;
    }
    if (cfg.observer) cfg.observer(sweep, box);
    res.width_history.push_back(average_widths(sys, box));
    double shrink = 0.0;
    for (std::size_t j = 0; j < box.size(); ++j) shrink = std::max(shrink, before[j].width() - box[j].width());
    if (shrink <= cfg.width_tolerance) {
      res.status = ContractionStatus::converged;
      break;
    }
  }
  res.final_box = box;
  res.final_states = sys.state_box(box);
  res.final_measurements = sys.measurement_intervals(box);
  return res;
}

inline ContractionResult icp_contract(const ResidualSystem& sys, const StateBox& states, const MeasurementSet& meas,
                                      const IcpConfig& cfg = {}) {
  return icp_contract(sys, sys.make_box(states, meas), cfg);
}

}  // namespace rdmise
