#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "rdmise/dense_matrix.hpp"
#include "rdmise/network.hpp"
#include "rdmise/polynomial.hpp"
#include "rdmise/rdm.hpp"

namespace rdmise {

struct QuantityId {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(QuantityId, QuantityId) = default;
};

inline std::ostream& operator<<(std::ostream& os, QuantityId q) { return os << "q" << q.value; }

enum class QuantityKind : std::uint8_t { e, f, i_re, i_im, v_aux, measurement };

/// What a quantity slot stands for. index is a bus index (e, f, v_aux), a
/// branch index (i_re, i_im) or a position in the measurement set.
struct QuantityInfo {
  QuantityKind kind;
  std::size_t index;
  Phase phase;

  bool is_state() const { return kind <= QuantityKind::i_im; }
};

enum class ResidualKind : std::uint8_t {
  current_sq,
  power_balance_re,
  power_balance_im,
  voltage_sq,
  voltage_drop_re,
  voltage_drop_im,
  power_flow_re,
  power_flow_im,
};

inline const char* residual_kind_name(ResidualKind k) {
  switch (k) {
    case ResidualKind::current_sq: return "current_sq";
    case ResidualKind::power_balance_re: return "power_balance_re";
    case ResidualKind::power_balance_im: return "power_balance_im";
    case ResidualKind::voltage_sq: return "voltage_sq";
    case ResidualKind::voltage_drop_re: return "voltage_drop_re";
    case ResidualKind::voltage_drop_im: return "voltage_drop_im";
    case ResidualKind::power_flow_re: return "power_flow_re";
    case ResidualKind::power_flow_im: return "power_flow_im";
  }
  return "?";
}

using QuantityPoly = QuadraticPoly<QuantityId>;

/// One row of g(x) = 0. location is a bus or branch id.
struct Residual {
  ResidualKind kind;
  int location;
  Phase phase;
  QuantityPoly poly;
};

namespace detail {

template <typename T>
auto at(const std::vector<T>& v) {
  return [&v](QuantityId q) -> const T& { return v[q.value]; };
}

}  // namespace detail

/// The residual system over a flat quantity vector:
///   e, f per bus/phase; I_re, I_im per branch/phase; an auxiliary squared
///   voltage for every non-reference bus/phase without a V_sq measurement;
///   one slot per measurement.
/// Immutable after build_residuals().
class ResidualSystem {
 public:
  const std::vector<Residual>& equations() const { return equations_; }
  const std::vector<QuantityInfo>& quantities() const { return quantities_; }
  std::size_t size() const { return quantities_.size(); }
  std::size_t num_states() const { return num_states_; }
  std::size_t num_measurements() const { return num_measurements_; }
  std::size_t reference_bus() const { return reference_; }

  QuantityId e(std::size_t bus, Phase p) const { return *e_[bus][idx(p)]; }
  QuantityId f(std::size_t bus, Phase p) const { return *f_[bus][idx(p)]; }
  QuantityId i_re(std::size_t branch, Phase p) const { return *ire_[branch][idx(p)]; }
  QuantityId i_im(std::size_t branch, Phase p) const { return *iim_[branch][idx(p)]; }
  QuantityId measurement(std::size_t k) const { return meas_[k]; }
  /// Squared-voltage quantity used by the power balance at a bus/phase.
  std::optional<QuantityId> v(std::size_t bus, Phase p) const { return v_[bus][idx(p)]; }

  std::string label(QuantityId q) const {
    const QuantityInfo& info = quantities_[q.value];
    const char ph = phase_char(info.phase);
    switch (info.kind) {
      case QuantityKind::e: return "e@bus" + std::to_string(bus_ids_[info.index]) + ph;
      case QuantityKind::f: return "f@bus" + std::to_string(bus_ids_[info.index]) + ph;
      case QuantityKind::i_re: return "Ire@branch" + std::to_string(branch_ids_[info.index]) + ph;
      case QuantityKind::i_im: return "Iim@branch" + std::to_string(branch_ids_[info.index]) + ph;
      case QuantityKind::v_aux: return "V@bus" + std::to_string(bus_ids_[info.index]) + ph;
      case QuantityKind::measurement: return measurement_labels_[info.index];
    }
    return "?";
  }

  std::vector<double> evaluate(const std::vector<double>& x) const {
    std::vector<double> out;
    out.reserve(equations_.size());
    for (const Residual& r : equations_) out.push_back(r.poly.evaluate(detail::at(x)));
    return out;
  }

  std::vector<Interval> evaluate_interval(const std::vector<Interval>& box) const {
    std::vector<Interval> out;
    out.reserve(equations_.size());
    for (const Residual& r : equations_) out.push_back(r.poly.evaluate_interval(detail::at(box)));
    return out;
  }

  /// d g_i / d x_j over every quantity, states and measurements alike.
  DenseMatrix<double> point_jacobian(const std::vector<double>& x) const {
    DenseMatrix<double> jac(equations_.size(), size(), 0.0);
    for (std::size_t i = 0; i < equations_.size(); ++i) {
      const QuantityPoly& g = equations_[i].poly;
      for (QuantityId q : g.variables()) jac(i, q.value) = g.derivative(q, detail::at(x));
    }
    return jac;
  }

  DenseMatrix<Interval> interval_jacobian(const std::vector<Interval>& box) const {
    DenseMatrix<Interval> jac(equations_.size(), size(), Interval(0.0));
    for (std::size_t i = 0; i < equations_.size(); ++i) {
      const QuantityPoly& g = equations_[i].poly;
      for (QuantityId q : g.variables()) jac(i, q.value) = g.derivative_interval(q, detail::at(box));
    }
    return jac;
  }

  /// Substitute x_j = lo_j + w_j * alpha_j, alpha_j carrying RdmVarId{j}.
  /// Zero-width quantities become constants.
  std::vector<RdmExpr> bind_rdm(const std::vector<Interval>& box) const {
    std::vector<RdmExpr> out;
    out.reserve(equations_.size());
    auto map = [&](QuantityId q) {
      const Interval& iv = box[q.value];
      return std::tuple{iv.lo(), iv.width(), RdmVarId{q.value}};
    };
    for (const Residual& r : equations_) out.push_back(r.poly.template substitute_affine<RdmVarId>(map));
    return out;
  }

  std::vector<RdmExpr> bind_rdm(const StateBox& states, const MeasurementSet& meas) const {
    return bind_rdm(make_box(states, meas));
  }

  /// Flat box from a state box and measurement intervals. Auxiliary squared
  /// voltages start at the classic enclosure of e^2 + f^2.
  std::vector<Interval> make_box(const StateBox& s, const MeasurementSet& meas) const {
    std::vector<Interval> box(size());
    for (std::size_t j = 0; j < size(); ++j) {
      const QuantityInfo& q = quantities_[j];
      const std::size_t p = idx(q.phase);
      switch (q.kind) {
        case QuantityKind::e: box[j] = s.e[q.index][p]; break;
        case QuantityKind::f: box[j] = s.f[q.index][p]; break;
        case QuantityKind::i_re: box[j] = s.i_re[q.index][p]; break;
        case QuantityKind::i_im: box[j] = s.i_im[q.index][p]; break;
        case QuantityKind::v_aux: box[j] = s.v_sq(q.index, q.phase); break;
        case QuantityKind::measurement: box[j] = meas[q.index].interval(); break;
      }
    }
    return box;
  }

  StateBox state_box(const std::vector<Interval>& box) const {
    StateBox s;
    s.e.assign(bus_ids_.size(), {});
    s.f.assign(bus_ids_.size(), {});
    s.i_re.assign(branch_ids_.size(), {});
    s.i_im.assign(branch_ids_.size(), {});
    for (std::size_t j = 0; j < size(); ++j) {
      const QuantityInfo& q = quantities_[j];
      const std::size_t p = idx(q.phase);
      switch (q.kind) {
        case QuantityKind::e: s.e[q.index][p] = box[j]; break;
        case QuantityKind::f: s.f[q.index][p] = box[j]; break;
        case QuantityKind::i_re: s.i_re[q.index][p] = box[j]; break;
        case QuantityKind::i_im: s.i_im[q.index][p] = box[j]; break;
        default: break;
      }
    }
    return s;
  }

  std::vector<Interval> measurement_intervals(const std::vector<Interval>& box) const {
    std::vector<Interval> out(num_measurements_);
    for (std::size_t k = 0; k < num_measurements_; ++k) out[k] = box[meas_[k].value];
    return out;
  }

  /// Full quantity vector for a state: measurement slots get h(x), auxiliary
  /// voltages get e^2 + f^2.
  std::vector<double> point_from_state(const StatePoint& s) const {
    std::vector<double> x(size(), 0.0);
    for (std::size_t j = 0; j < size(); ++j) {
      const QuantityInfo& q = quantities_[j];
      const std::size_t p = idx(q.phase);
      switch (q.kind) {
        case QuantityKind::e: x[j] = s.e[q.index][p]; break;
        case QuantityKind::f: x[j] = s.f[q.index][p]; break;
        case QuantityKind::i_re: x[j] = s.i_re[q.index][p]; break;
        case QuantityKind::i_im: x[j] = s.i_im[q.index][p]; break;
        case QuantityKind::v_aux: break;
        case QuantityKind::measurement: break;
      }
    }
    for (std::size_t j = 0; j < size(); ++j) {
      const QuantityInfo& q = quantities_[j];
      if (q.kind == QuantityKind::v_aux) {
        const double ev = x[e(q.index, q.phase).value];
        const double fv = x[f(q.index, q.phase).value];
        x[j] = ev * ev + fv * fv;
      } else if (q.kind == QuantityKind::measurement) {
        x[j] = h_[q.index].evaluate(detail::at(x));
      }
    }
    return x;
  }

  /// Measurement function of measurement k as a polynomial in state quantities.
  const QuantityPoly& measurement_function(std::size_t k) const { return h_[k]; }

 private:
  using Slot = std::optional<QuantityId>;
  using Slots = std::vector<std::array<Slot, 3>>;

  std::vector<Residual> equations_;
  std::vector<QuantityInfo> quantities_;
  std::vector<QuantityPoly> h_;
  std::vector<std::string> measurement_labels_;
  std::vector<int> bus_ids_, branch_ids_;
  Slots e_, f_, ire_, iim_, v_;
  std::vector<QuantityId> meas_;
  std::size_t num_states_ = 0;
  std::size_t num_measurements_ = 0;
  std::size_t reference_ = 0;

  friend ResidualSystem build_residuals(const ThreePhaseNetwork&, const MeasurementSet&);
};

/// Builds the residual rows (load convention: positive P, Q consumed):
///   current_sq        L - Ire^2 - Iim^2
///   power_balance_re  P e + Q f - V (I_in - sum I_out)_re
///   power_balance_im  P f - Q e - V (I_in - sum I_out)_im
///   voltage_sq        V - e^2 - f^2 (V measured or auxiliary)
///   voltage_drop_re   e_i - e_j - sum_p (r_sp Ire_p - x_sp Iim_p)
///   voltage_drop_im   f_i - f_j - sum_p (x_sp Ire_p + r_sp Iim_p)
///   power_flow_re/im  P_ij - (e_i Ire + f_i Iim), Q_ij - (f_i Ire - e_i Iim)
/// sorted by kind, location, phase.
inline ResidualSystem build_residuals(const ThreePhaseNetwork& net, const MeasurementSet& meas) {
  ResidualSystem sys;
  const auto& buses = net.buses();
  const auto& branches = net.branches();
  const std::size_t nb = buses.size();
  const std::size_t nl = branches.size();
  sys.reference_ = net.reference();
  for (const Bus& b : buses) sys.bus_ids_.push_back(b.id);
  for (const Branch& br : branches) sys.branch_ids_.push_back(br.id);
  sys.e_.assign(nb, {});
  sys.f_.assign(nb, {});
  sys.v_.assign(nb, {});
  sys.ire_.assign(nl, {});
  sys.iim_.assign(nl, {});

  auto add = [&](QuantityKind kind, std::size_t index, Phase p) {
    const QuantityId id{static_cast<std::uint32_t>(sys.quantities_.size())};
    sys.quantities_.push_back({kind, index, p});
    return id;
  };
  for (std::size_t b = 0; b < nb; ++b) {
    for (Phase p : buses[b].phases.list()) {
      sys.e_[b][idx(p)] = add(QuantityKind::e, b, p);
      sys.f_[b][idx(p)] = add(QuantityKind::f, b, p);
    }
  }
  for (std::size_t k = 0; k < nl; ++k) {
    for (Phase p : branches[k].phases.list()) {
      sys.ire_[k][idx(p)] = add(QuantityKind::i_re, k, p);
      sys.iim_[k][idx(p)] = add(QuantityKind::i_im, k, p);
    }
  }
  sys.num_states_ = sys.quantities_.size();

  // The first V_sq measurement at a bus/phase doubles as its squared voltage.
  std::vector<std::array<bool, 3>> v_measured(nb, {false, false, false});
  for (const Measurement& m : meas) {
    if (m.kind == MeasurementKind::V_sq) v_measured[*net.bus_index(m.location)][idx(m.phase)] = true;
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (net.is_reference(b)) continue;
    for (Phase p : buses[b].phases.list()) {
      if (!v_measured[b][idx(p)]) sys.v_[b][idx(p)] = add(QuantityKind::v_aux, b, p);
    }
  }
  sys.num_measurements_ = meas.size();
  for (std::size_t k = 0; k < meas.size(); ++k) {
    const QuantityId id = add(QuantityKind::measurement, k, meas[k].phase);
    sys.meas_.push_back(id);
    sys.measurement_labels_.push_back(meas[k].label());
    const Measurement& m = meas[k];
    if (m.kind == MeasurementKind::V_sq) {
      const std::size_t b = *net.bus_index(m.location);
      if (!sys.v_[b][idx(m.phase)]) sys.v_[b][idx(m.phase)] = id;
    }
  }

  using P = QuantityPoly;
  auto var = [](QuantityId q, double c = 1.0) { return P::variable(q, c); };

  // Measurement functions h(x).
  std::vector<std::array<std::optional<P>, 3>> load_current_re(nb), load_current_im(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    for (Phase p : buses[b].phases.list()) {
      P re, im;
      if (auto k = net.parent_branch(b)) {
        re += var(sys.i_re(*k, p));
        im += var(sys.i_im(*k, p));
      }
      for (std::size_t k : net.child_branches(b)) {
        if (!branches[k].phases.has(p)) continue;
        re -= var(sys.i_re(k, p));
        im -= var(sys.i_im(k, p));
      }
      load_current_re[b][idx(p)] = re;
      load_current_im[b][idx(p)] = im;
    }
  }
  for (const Measurement& m : meas) {
    const Phase p = m.phase;
    P h;
    if (at_bus(m.kind)) {
      const std::size_t b = *net.bus_index(m.location);
      const P e = var(sys.e(b, p));
      const P f = var(sys.f(b, p));
      const P& ir = *load_current_re[b][idx(p)];
      const P& ii = *load_current_im[b][idx(p)];
      switch (m.kind) {
        case MeasurementKind::V_sq: h = e * e + f * f; break;
        case MeasurementKind::P_inj: h = e * ir + f * ii; break;
        case MeasurementKind::Q_inj: h = f * ir - e * ii; break;
        default: break;
      }
    } else {
      const std::size_t k = *net.branch_index(m.location);
      const std::size_t b = branches[k].from;
      const P e = var(sys.e(b, p));
      const P f = var(sys.f(b, p));
      const P ir = var(sys.i_re(k, p));
      const P ii = var(sys.i_im(k, p));
      switch (m.kind) {
        case MeasurementKind::L_sq: h = ir * ir + ii * ii; break;
        case MeasurementKind::P_flow: h = e * ir + f * ii; break;
        case MeasurementKind::Q_flow: h = f * ir - e * ii; break;
        default: break;
      }
    }
    sys.h_.push_back(h);
  }

  struct Keyed {
    Residual r;
    std::size_t tie;
  };
  std::vector<Keyed> rows;
  auto push = [&](ResidualKind kind, int loc, Phase p, P poly, std::size_t tie = 0) {
    rows.push_back({{kind, loc, p, std::move(poly)}, tie});
  };

  for (std::size_t k = 0; k < meas.size(); ++k) {
    const Measurement& m = meas[k];
    const P z = var(sys.meas_[k]);
    switch (m.kind) {
      case MeasurementKind::L_sq: push(ResidualKind::current_sq, m.location, m.phase, z - sys.h_[k], k); break;
      case MeasurementKind::V_sq: push(ResidualKind::voltage_sq, m.location, m.phase, z - sys.h_[k], k); break;
      case MeasurementKind::P_flow: push(ResidualKind::power_flow_re, m.location, m.phase, z - sys.h_[k], k); break;
      case MeasurementKind::Q_flow: push(ResidualKind::power_flow_im, m.location, m.phase, z - sys.h_[k], k); break;
      default: break;
    }
  }

  std::vector<std::array<std::optional<QuantityId>, 3>> p_inj(nb), q_inj(nb);
  for (std::size_t k = 0; k < meas.size(); ++k) {
    const Measurement& m = meas[k];
    if (m.kind == MeasurementKind::P_inj) p_inj[*net.bus_index(m.location)][idx(m.phase)] = sys.meas_[k];
    if (m.kind == MeasurementKind::Q_inj) q_inj[*net.bus_index(m.location)][idx(m.phase)] = sys.meas_[k];
  }
  for (std::size_t b = 0; b < nb; ++b) {
    if (net.is_reference(b)) continue;
    const int id = buses[b].id;
    for (Phase p : buses[b].phases.list()) {
      const P e = var(sys.e(b, p));
      const P f = var(sys.f(b, p));
      const P V = var(*sys.v(b, p));
      const P P_ = var(*p_inj[b][idx(p)]);
      const P Q_ = var(*q_inj[b][idx(p)]);
      push(ResidualKind::power_balance_re, id, p, P_ * e + Q_ * f - V * *load_current_re[b][idx(p)]);
      push(ResidualKind::power_balance_im, id, p, P_ * f - Q_ * e - V * *load_current_im[b][idx(p)]);
      const QuantityId vq = *sys.v(b, p);
      if (sys.quantities_[vq.value].kind == QuantityKind::v_aux) {
        push(ResidualKind::voltage_sq, id, p, V - e * e - f * f, meas.size() + b);
      }
    }
  }

  for (std::size_t k = 0; k < nl; ++k) {
    const Branch& br = branches[k];
    for (Phase s : br.phases.list()) {
      P re = var(sys.e(br.from, s)) - var(sys.e(br.to, s));
      P im = var(sys.f(br.from, s)) - var(sys.f(br.to, s));
      for (Phase p : br.phases.list()) {
        const double r = br.r[idx(s)][idx(p)];
        const double x = br.x[idx(s)][idx(p)];
        re -= var(sys.i_re(k, p), r) - var(sys.i_im(k, p), x);
        im -= var(sys.i_re(k, p), x) + var(sys.i_im(k, p), r);
      }
      push(ResidualKind::voltage_drop_re, br.id, s, re);
      push(ResidualKind::voltage_drop_im, br.id, s, im);
    }
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Keyed& a, const Keyed& b) {
    return std::tuple(a.r.kind, a.r.location, a.r.phase, a.tie) <
           std::tuple(b.r.kind, b.r.location, b.r.phase, b.tie);
  });
  for (Keyed& k : rows) sys.equations_.push_back(std::move(k.r));
  return sys;
}

}  // namespace rdmise
