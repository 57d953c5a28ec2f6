#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "rdmise/errors.hpp"
#include "rdmise/interval.hpp"

namespace rdmise {

enum class Phase : std::uint8_t { a = 0, b = 1, c = 2 };

inline constexpr std::array<Phase, 3> kAllPhases = {Phase::a, Phase::b, Phase::c};

inline constexpr std::size_t idx(Phase p) { return static_cast<std::size_t>(p); }

inline char phase_char(Phase p) { return "abc"[idx(p)]; }

inline Phase parse_phase(const std::string& s) {
  if (s == "a") return Phase::a;
  if (s == "b") return Phase::b;
  if (s == "c") return Phase::c;
  throw ParseError("unknown phase '" + s + "'");
}

class PhaseSet {
 public:
  constexpr PhaseSet() = default;
  static constexpr PhaseSet all() { return PhaseSet(0b111); }

  static PhaseSet parse(const std::string& s) {
    PhaseSet out;
    for (char ch : s) {
      if (ch < 'a' || ch > 'c') throw ParseError("invalid phase set '" + s + "'");
      out.bits_ |= static_cast<std::uint8_t>(1u << (ch - 'a'));
    }
    if (out.empty()) throw ParseError("empty phase set");
    return out;
  }

  constexpr bool has(Phase p) const { return (bits_ >> idx(p)) & 1u; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr bool subset_of(PhaseSet o) const { return (bits_ & ~o.bits_) == 0; }
  std::size_t count() const { return std::size_t(has(Phase::a)) + has(Phase::b) + has(Phase::c); }

  std::vector<Phase> list() const {
    std::vector<Phase> out;
    for (Phase p : kAllPhases)
      if (has(p)) out.push_back(p);
    return out;
  }

  std::string str() const {
    std::string s;
    for (Phase p : list()) s += phase_char(p);
    return s;
  }

  friend constexpr bool operator==(PhaseSet, PhaseSet) = default;

 private:
  constexpr explicit PhaseSet(std::uint8_t bits) : bits_(bits) {}
  std::uint8_t bits_ = 0;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Per-phase base: kva is per phase, kv is line-to-neutral.
struct PowerBase {
  double kva = 1000.0;
  double kv = 1.0;
  double z_base_ohm() const { return kv * kv * 1000.0 / kva; }
};

struct SlackVoltage {
  std::array<double, 3> magnitude = {1.0, 1.0, 1.0};
  std::array<double, 3> angle_deg = {0.0, -120.0, 120.0};
};

struct Bus {
  int id = 0;
  PhaseSet phases = PhaseSet::all();
  std::array<double, 3> load_p{};  // p.u., positive = consumed
  std::array<double, 3> load_q{};
  bool zero_injection = false;
};

/// Branch oriented parent (from) -> child (to); indices refer to buses().
struct Branch {
  int id = 0;
  std::size_t from = 0;
  std::size_t to = 0;
  PhaseSet phases;
  Matrix3 r{};  // p.u.
  Matrix3 x{};
};

/// Raw branch description as it appears in a file, before orientation.
struct BranchSpec {
  int id = 0;
  int from = 0;
  int to = 0;
  Matrix3 r_ohm{};
  Matrix3 x_ohm{};
};

/// Validated radial three-phase feeder in per-unit. Immutable once built.
class ThreePhaseNetwork {
 public:
  static ThreePhaseNetwork build(std::string name, PowerBase base, std::vector<Bus> buses,
                                 const std::vector<BranchSpec>& branches, int reference_bus,
                                 SlackVoltage slack = {}) {
    ThreePhaseNetwork net;
    net.name_ = std::move(name);
    net.base_ = base;
    net.slack_ = slack;
    if (!(base.kva > 0.0) || !(base.kv > 0.0)) throw ParseError("base kva and kv must be positive");
    net.buses_ = std::move(buses);
    for (std::size_t i = 0; i < net.buses_.size(); ++i) {
      if (!net.bus_pos_.emplace(net.buses_[i].id, i).second) {
        throw ParseError("duplicate bus id " + std::to_string(net.buses_[i].id));
      }
    }
    auto ref = net.bus_index(reference_bus);
    if (!ref) throw UnknownLocation("reference bus " + std::to_string(reference_bus) + " not found");
    net.reference_ = *ref;

    // Undirected adjacency, then BFS from the root to orient and detect cycles.
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(net.buses_.size());
    std::map<int, bool> seen_branch;
    for (std::size_t k = 0; k < branches.size(); ++k) {
      const BranchSpec& b = branches[k];
      const std::string tag = "branch " + std::to_string(b.id);
      if (!seen_branch.emplace(b.id, true).second) throw ParseError("duplicate " + tag);
      auto f = net.bus_index(b.from);
      auto t = net.bus_index(b.to);
      if (!f || !t) throw UnknownLocation(tag + " references an unknown bus");
      if (*f == *t) throw NonRadialTopology(tag + " is a self-loop");
      adj[*f].push_back({*t, k});
      adj[*t].push_back({*f, k});
    }
    const double zb = base.z_base_ohm();
    net.parent_.assign(net.buses_.size(), std::nullopt);
    net.children_.assign(net.buses_.size(), {});
    std::vector<bool> visited(net.buses_.size(), false);
    std::vector<bool> used(branches.size(), false);
    std::queue<std::size_t> q;
    q.push(net.reference_);
    visited[net.reference_] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      net.order_.push_back(u);
      for (const auto& [v, k] : adj[u]) {
        if (used[k]) continue;
        used[k] = true;
        if (visited[v]) {
          throw NonRadialTopology("branch " + std::to_string(branches[k].id) + " closes a loop");
        }
        visited[v] = true;
        Branch br;
        br.id = branches[k].id;
        br.from = u;
        br.to = v;
        br.phases = net.buses_[v].phases;
        const std::string tag = "branch " + std::to_string(br.id);
        if (!br.phases.subset_of(net.buses_[u].phases)) {
          throw ParseError(tag + ": phases " + br.phases.str() + " not present at bus " +
                           std::to_string(net.buses_[u].id));
        }
        check_impedance(branches[k].r_ohm, br.phases, tag + " resistance");
        check_impedance(branches[k].x_ohm, br.phases, tag + " reactance");
        for (Phase s : br.phases.list()) {
          for (Phase p : br.phases.list()) {
            br.r[idx(s)][idx(p)] = branches[k].r_ohm[idx(s)][idx(p)] / zb;
            br.x[idx(s)][idx(p)] = branches[k].x_ohm[idx(s)][idx(p)] / zb;
          }
        }
        net.parent_[v] = net.branches_.size();
        net.children_[u].push_back(net.branches_.size());
        net.branches_.push_back(br);
        q.push(v);
      }
    }
    for (std::size_t i = 0; i < net.buses_.size(); ++i) {
      if (!visited[i]) {
        throw NonRadialTopology("bus " + std::to_string(net.buses_[i].id) +
                                " is not reachable from the reference bus");
      }
    }
    for (std::size_t k = 0; k < net.branches_.size(); ++k) net.branch_pos_[net.branches_[k].id] = k;
    return net;
  }

  const std::string& name() const { return name_; }
  const PowerBase& base() const { return base_; }
  const SlackVoltage& slack() const { return slack_; }
  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  std::size_t reference() const { return reference_; }
  bool is_reference(std::size_t bus) const { return bus == reference_; }

  /// Buses in breadth-first order from the root.
  const std::vector<std::size_t>& bfs_order() const { return order_; }
  std::optional<std::size_t> parent_branch(std::size_t bus) const { return parent_[bus]; }
  const std::vector<std::size_t>& child_branches(std::size_t bus) const { return children_[bus]; }

  std::optional<std::size_t> bus_index(int id) const {
    auto it = bus_pos_.find(id);
    if (it == bus_pos_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> branch_index(int id) const {
    auto it = branch_pos_.find(id);
    if (it == branch_pos_.end()) return std::nullopt;
    return it->second;
  }

  /// Fixed reference-bus voltage (real, imaginary) per phase. Phase a has f = 0 exactly.
  std::pair<double, double> slack_voltage(Phase p) const {
    const double m = slack_.magnitude[idx(p)];
    const double ang = slack_.angle_deg[idx(p)];
    if (ang == 0.0) return {m, 0.0};
    const double rad = ang * kPi / 180.0;
    return {m * std::cos(rad), m * std::sin(rad)};
  }

  /// Buses in the subtree rooted at bus (inclusive).
  std::vector<std::size_t> subtree(std::size_t bus) const {
    std::vector<std::size_t> out{bus};
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t k : children_[out[i]]) out.push_back(branches_[k].to);
    }
    return out;
  }

  static constexpr double kPi = 3.14159265358979323846;

 private:
  static void check_impedance(const Matrix3& m, PhaseSet phases, const std::string& tag) {
    const auto ph = phases.list();
    for (Phase s : ph) {
      if (!(m[idx(s)][idx(s)] > 0.0)) {
        throw AsymmetricImpedance(tag + ": diagonal entry for phase " + phase_char(s) +
                                  " must be positive");
      }
      for (Phase p : ph) {
        const double a = m[idx(s)][idx(p)];
        const double b = m[idx(p)][idx(s)];
        if (std::abs(a - b) > 1e-12 * std::max({1.0, std::abs(a), std::abs(b)})) {
          throw AsymmetricImpedance(tag + " matrix is not symmetric");
        }
      }
    }
  }

  std::string name_;
  PowerBase base_;
  SlackVoltage slack_;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::size_t reference_ = 0;
  std::map<int, std::size_t> bus_pos_;
  std::map<int, std::size_t> branch_pos_;
  std::vector<std::size_t> order_;
  std::vector<std::optional<std::size_t>> parent_;
  std::vector<std::vector<std::size_t>> children_;
};

// ---- measurements ----------------------------------------------------------

enum class MeasurementKind { V_sq, P_inj, Q_inj, L_sq, P_flow, Q_flow };

inline const char* kind_name(MeasurementKind k) {
  switch (k) {
    case MeasurementKind::V_sq: return "V_sq";
    case MeasurementKind::P_inj: return "P_inj";
    case MeasurementKind::Q_inj: return "Q_inj";
    case MeasurementKind::L_sq: return "L_sq";
    case MeasurementKind::P_flow: return "P_flow";
    case MeasurementKind::Q_flow: return "Q_flow";
  }
  return "?";
}

inline MeasurementKind parse_kind(const std::string& s) {
  for (auto k : {MeasurementKind::V_sq, MeasurementKind::P_inj, MeasurementKind::Q_inj,
                 MeasurementKind::L_sq, MeasurementKind::P_flow, MeasurementKind::Q_flow}) {
    if (s == kind_name(k)) return k;
  }
  throw ParseError("unknown measurement kind '" + s + "'");
}

inline bool at_bus(MeasurementKind k) {
  return k == MeasurementKind::V_sq || k == MeasurementKind::P_inj || k == MeasurementKind::Q_inj;
}

/// z = h(x) + v with v in [err_lo, err_hi], so h(x) in [value - err_hi, value - err_lo].
/// location is a bus id for V_sq/P_inj/Q_inj and a branch id otherwise.
struct Measurement {
  MeasurementKind kind = MeasurementKind::V_sq;
  int location = 0;
  Phase phase = Phase::a;
  double value = 0.0;
  double err_lo = 0.0;
  double err_hi = 0.0;
  bool is_pseudo = false;

  Interval interval() const { return {value - err_hi, value - err_lo}; }

  std::string label() const {
    return std::string(kind_name(kind)) + (at_bus(kind) ? "@bus" : "@branch") +
           std::to_string(location) + phase_char(phase);
  }
};

/// Relative accuracy classes: real instruments and pseudo (rated) values.
struct AccuracyClass {
  double real = 0.01;
  double pseudo = 0.10;
};

inline void apply_default_error(Measurement& m, AccuracyClass acc = {}) {
  const double a = (m.is_pseudo ? acc.pseudo : acc.real) * std::abs(m.value);
  m.err_lo = -a;
  m.err_hi = a;
}

using MeasurementSet = std::vector<Measurement>;

/// Checks locations, error bounds and signs; injects exact zero P/Q at
/// zero-injection buses. Every non-reference bus/phase must end up with
/// exactly one P_inj and one Q_inj.
inline MeasurementSet validate_measurements(MeasurementSet in, const ThreePhaseNetwork& net) {
  std::map<std::tuple<std::size_t, std::size_t, int>, bool> injections;
  MeasurementSet out;
  for (Measurement& m : in) {
    const std::string tag = m.label();
    PhaseSet present;
    std::size_t bus = 0;
    if (at_bus(m.kind)) {
      auto b = net.bus_index(m.location);
      if (!b) throw UnknownLocation(tag + ": unknown bus " + std::to_string(m.location));
      present = net.buses()[*b].phases;
      bus = *b;
    } else {
      auto k = net.branch_index(m.location);
      if (!k) throw UnknownLocation(tag + ": unknown branch " + std::to_string(m.location));
      present = net.branches()[*k].phases;
    }
    if (!present.has(m.phase)) throw UnknownLocation(tag + ": phase not present");
    if (!std::isfinite(m.value) || !std::isfinite(m.err_lo) || !std::isfinite(m.err_hi)) {
      throw InvalidMeasurement(tag + ": non-finite value");
    }
    if (m.err_lo > m.err_hi) throw EmptyErrorInterval(tag + ": err_lo > err_hi");
    if (m.err_lo > 0.0 || m.err_hi < 0.0) {
      throw InvalidMeasurement(tag + ": error bounds must satisfy err_lo <= 0 <= err_hi");
    }
    if (m.kind == MeasurementKind::V_sq && !(m.value > 0.0)) {
      throw InvalidMeasurement(tag + ": squared voltage must be positive");
    }
    if (m.kind == MeasurementKind::L_sq && m.value < 0.0) {
      throw InvalidMeasurement(tag + ": squared current must be nonnegative");
    }
    if (m.kind == MeasurementKind::P_inj || m.kind == MeasurementKind::Q_inj) {
      if (net.is_reference(bus)) throw InvalidMeasurement(tag + ": injection at the reference bus");
      if (net.buses()[bus].zero_injection &&
          (m.value != 0.0 || m.err_lo != 0.0 || m.err_hi != 0.0)) {
        throw InvalidMeasurement(tag + ": bus is declared zero-injection");
      }
      const int kind = m.kind == MeasurementKind::P_inj ? 0 : 1;
      if (!injections.emplace(std::tuple{bus, idx(m.phase), kind}, true).second) {
        throw InvalidMeasurement(tag + ": duplicate injection measurement");
      }
    }
    out.push_back(m);
  }
  for (std::size_t b = 0; b < net.buses().size(); ++b) {
    const Bus& bus = net.buses()[b];
    if (net.is_reference(b)) continue;
    for (Phase p : bus.phases.list()) {
      for (int kind = 0; kind < 2; ++kind) {
        const auto mk = kind == 0 ? MeasurementKind::P_inj : MeasurementKind::Q_inj;
        if (injections.count({b, idx(p), kind})) continue;
        if (bus.zero_injection) {
          out.push_back({mk, bus.id, p, 0.0, 0.0, 0.0, true});
        } else {
          throw InvalidMeasurement(std::string("missing ") + kind_name(mk) + " at bus " +
                                   std::to_string(bus.id) + " phase " + phase_char(p));
        }
      }
    }
  }
  return out;
}

// ---- state box ---------------------------------------------------------------

/// Per bus/phase rectangular voltage and per branch/phase current intervals.
/// Absent phases hold degenerate zeros.
struct StateBox {
  std::vector<std::array<Interval, 3>> e, f;
  std::vector<std::array<Interval, 3>> i_re, i_im;

  Interval v_sq(std::size_t bus, Phase p) const {
    return sqr(e[bus][idx(p)]) + sqr(f[bus][idx(p)]);
  }
};

/// A point in state space, laid out like StateBox.
struct StatePoint {
  std::vector<std::array<double, 3>> e, f;
  std::vector<std::array<double, 3>> i_re, i_im;
};

inline bool contains(const StateBox& box, const StatePoint& x) {
  auto inside = [](const auto& iv, const auto& pv) {
    for (std::size_t i = 0; i < iv.size(); ++i)
      for (std::size_t p = 0; p < 3; ++p)
        if (!iv[i][p].contains(pv[i][p])) return false;
    return true;
  };
  return inside(box.e, x.e) && inside(box.f, x.f) && inside(box.i_re, x.i_re) &&
         inside(box.i_im, x.i_im);
}

struct BoxConfig {
  double u_min = 0.9;
  double u_max = 1.1;
  double angle_deg = 5.0;
  // Lowest voltage magnitude assumed when bounding branch currents.
  double current_voltage_floor = 0.9;
};

namespace detail {

// Range of cos over [a, b] radians.
inline Interval cos_range(double a, double b) {
  constexpr double pi = ThreePhaseNetwork::kPi;
  double lo = std::min(std::cos(a), std::cos(b));
  double hi = std::max(std::cos(a), std::cos(b));
  for (double k = std::ceil(a / pi); k * pi <= b; k += 1.0) {
    const double v = std::fmod(std::abs(k), 2.0) == 0.0 ? 1.0 : -1.0;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return {lo, hi};
}

inline Interval sin_range(double a, double b) {
  constexpr double half_pi = ThreePhaseNetwork::kPi / 2.0;
  return cos_range(a - half_pi, b - half_pi);
}

}  // namespace detail

inline double nominal_angle_deg(Phase p) {
  constexpr std::array<double, 3> ang = {0.0, -120.0, 120.0};
  return ang[idx(p)];
}

/// Starting box: voltage rectangles from magnitude and angle ranges around
/// the nominal phase angles; branch currents bounded by downstream apparent
/// power over the voltage floor. The reference bus is fixed.
inline StateBox initial_state_box(const ThreePhaseNetwork& net, const MeasurementSet& meas,
                                  const BoxConfig& cfg = {}) {
  const std::size_t nb = net.buses().size();
  const std::size_t nl = net.branches().size();
  StateBox box;
  box.e.assign(nb, {});
  box.f.assign(nb, {});
  box.i_re.assign(nl, {});
  box.i_im.assign(nl, {});
  const Interval u(cfg.u_min, cfg.u_max);
  const double deg = ThreePhaseNetwork::kPi / 180.0;
  for (std::size_t b = 0; b < nb; ++b) {
    for (Phase p : net.buses()[b].phases.list()) {
      if (net.is_reference(b)) {
        const auto [re, im] = net.slack_voltage(p);
        box.e[b][idx(p)] = Interval(re);
        box.f[b][idx(p)] = Interval(im);
        continue;
      }
      const double lo = (nominal_angle_deg(p) - cfg.angle_deg) * deg;
      const double hi = (nominal_angle_deg(p) + cfg.angle_deg) * deg;
      box.e[b][idx(p)] = u * detail::cos_range(lo, hi);
      box.f[b][idx(p)] = u * detail::sin_range(lo, hi);
    }
  }

  // Largest |S| per bus/phase from the injection intervals.
  std::vector<std::array<double, 3>> p_max(nb, {0, 0, 0}), q_max(nb, {0, 0, 0});
  for (const Measurement& m : meas) {
    if (m.kind != MeasurementKind::P_inj && m.kind != MeasurementKind::Q_inj) continue;
    const auto b = net.bus_index(m.location);
    if (!b) continue;
    auto& slot = (m.kind == MeasurementKind::P_inj ? p_max : q_max)[*b][idx(m.phase)];
    slot = std::max(slot, m.interval().mag());
  }
  for (std::size_t k = 0; k < nl; ++k) {
    const Branch& br = net.branches()[k];
    for (Phase p : br.phases.list()) {
      double s = 0.0;
      for (std::size_t b : net.subtree(br.to)) {
        if (!net.buses()[b].phases.has(p)) continue;
        s += std::hypot(p_max[b][idx(p)], q_max[b][idx(p)]);
      }
      const double bound = s / cfg.current_voltage_floor;
      box.i_re[k][idx(p)] = Interval(-bound, bound);
      box.i_im[k][idx(p)] = Interval(-bound, bound);
    }
  }
  return box;
}

}  // namespace rdmise
