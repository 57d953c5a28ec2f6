#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdmise/equations.hpp"
#include "rdmise/errors.hpp"
#include "rdmise/network.hpp"
#include "rdmise/network_io.hpp"
#include "rdmise/parallel.hpp"
#include "rdmise/power_flow.hpp"
#include "rdmise/result.hpp"

namespace rdmise {

struct NoiseConfig {
  // Relative half-width of every instrument's error bound.
  AccuracyClass accuracy;
  // True loads are drawn uniformly in nominal * [1 - v, 1 + v] per bus/phase.
  double load_variation = 0.0;
};

/// One synthetic scenario: the true operating point and the noisy
/// measurements an estimator sees. Measurement order follows the placement.
struct TrialRecord {
  std::uint64_t seed = 0;
  Loading loading;
  StatePoint true_state;
  std::vector<double> true_measurements;
  MeasurementSet measurements;
};

/// Independent per-trial seed derived from a base seed (splitmix64).
inline std::uint64_t trial_seed(std::uint64_t base, std::uint64_t trial) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (trial + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// True measurement values: h(x) at the state, injections straight from the
/// loading (exact zeros stay exact).
inline std::vector<double> true_measurement_values(const ThreePhaseNetwork& net, const MeasurementSet& placement,
                                                   const Loading& loading, const StatePoint& state) {
  const ResidualSystem sys = build_residuals(net, placement);
  const std::vector<double> x = sys.point_from_state(state);
  std::vector<double> z(placement.size());
  for (std::size_t k = 0; k < placement.size(); ++k) {
    const Measurement& m = placement[k];
    if (m.kind == MeasurementKind::P_inj || m.kind == MeasurementKind::Q_inj) {
      const std::size_t b = *net.bus_index(m.location);
      const auto& table = m.kind == MeasurementKind::P_inj ? loading.p : loading.q;
      z[k] = table[b][idx(m.phase)];
    } else {
      z[k] = x[sys.measurement(k).value];
    }
  }
  return z;
}

/// Power flow at a (possibly perturbed) loading, then uniform noise inside
/// each instrument's bound. The declared bound is a = rel * |z_true|, so the
/// true value lies inside every emitted interval by construction.
inline TrialRecord synthesize_trial(const ThreePhaseNetwork& net, const Loading& nominal,
                                    const MeasurementSet& placement, const NoiseConfig& noise,
                                    std::uint64_t seed) {
  if (nominal.p.size() != net.buses().size() || nominal.q.size() != net.buses().size()) {
    throw LengthMismatch("loading size != bus count");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  TrialRecord t;
  t.seed = seed;
  t.loading = nominal;
  if (noise.load_variation > 0.0) {
    for (std::size_t b = 0; b < net.buses().size(); ++b) {
      for (Phase p : net.buses()[b].phases.list()) {
        t.loading.p[b][idx(p)] *= 1.0 + noise.load_variation * unit(rng);
        t.loading.q[b][idx(p)] *= 1.0 + noise.load_variation * unit(rng);
      }
    }
  }
  t.true_state = power_flow(net, t.loading);
  t.true_measurements = true_measurement_values(net, placement, t.loading, t.true_state);

  t.measurements = placement;
  for (std::size_t k = 0; k < placement.size(); ++k) {
    Measurement& m = t.measurements[k];
    const double z = t.true_measurements[k];
    const double rel = m.is_pseudo ? noise.accuracy.pseudo : noise.accuracy.real;
    const double a = rel * std::abs(z);
    const double u = unit(rng);
    m.value = a > 0.0 ? z + a * u : z;
    m.err_lo = -a;
    m.err_hi = a;
  }
  return t;
}

/// Full quantity vector of sys at the trial's truth.
inline std::vector<double> true_quantities(const ResidualSystem& sys, const TrialRecord& t) {
  if (sys.num_measurements() != t.true_measurements.size()) {
    throw LengthMismatch("trial has " + std::to_string(t.true_measurements.size()) + " measurements, system " +
                         std::to_string(sys.num_measurements()));
  }
  std::vector<double> x = sys.point_from_state(t.true_state);
  for (std::size_t k = 0; k < t.true_measurements.size(); ++k) x[sys.measurement(k).value] = t.true_measurements[k];
  return x;
}

/// Per-trial containment fractions: states (non-reference e, f and branch
/// currents of present phases) and measurements.
struct TrialScore {
  double states_inside = 0.0;
  double measurements_inside = 0.0;
  bool credible = false;
};

struct CredibilityConfig {
  double threshold = 0.95;
  // Absolute slack for the floating-point error of the computed truth.
  double containment_tol = 1e-10;
};

inline TrialScore score_trial(const ThreePhaseNetwork& net, const ContractionResult& r, const TrialRecord& t,
                              const CredibilityConfig& cfg = {}) {
  if (r.final_measurements.size() != t.true_measurements.size()) {
    throw LengthMismatch("result has " + std::to_string(r.final_measurements.size()) + " measurements, trial " +
                         std::to_string(t.true_measurements.size()));
  }
  auto inside = [&](const Interval& iv, double x) {
    return iv.lo() - cfg.containment_tol <= x && x <= iv.hi() + cfg.containment_tol;
  };
  std::size_t in = 0, total = 0;
  for (std::size_t b = 0; b < net.buses().size(); ++b) {
    if (net.is_reference(b)) continue;
    for (Phase p : net.buses()[b].phases.list()) {
      in += inside(r.final_states.e[b][idx(p)], t.true_state.e[b][idx(p)]);
      in += inside(r.final_states.f[b][idx(p)], t.true_state.f[b][idx(p)]);
      total += 2;
    }
  }
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    for (Phase p : net.branches()[k].phases.list()) {
      in += inside(r.final_states.i_re[k][idx(p)], t.true_state.i_re[k][idx(p)]);
      in += inside(r.final_states.i_im[k][idx(p)], t.true_state.i_im[k][idx(p)]);
      total += 2;
    }
  }
  std::size_t min = 0;
  for (std::size_t k = 0; k < t.true_measurements.size(); ++k)
    min += inside(r.final_measurements[k], t.true_measurements[k]);

  TrialScore s;
  s.states_inside = total ? static_cast<double>(in) / static_cast<double>(total) : 1.0;
  s.measurements_inside =
      t.true_measurements.empty() ? 1.0 : static_cast<double>(min) / static_cast<double>(t.true_measurements.size());
  s.credible = s.states_inside >= cfg.threshold && s.measurements_inside >= cfg.threshold;
  return s;
}

/// Fraction of trials whose state and measurement containment both reach
/// the threshold. An empty-set result is never credible.
inline double credibility(const ThreePhaseNetwork& net, const std::vector<ContractionResult>& results,
                          const std::vector<TrialRecord>& trials, const CredibilityConfig& cfg = {}) {
  if (results.size() != trials.size()) {
    throw LengthMismatch(std::to_string(results.size()) + " results for " + std::to_string(trials.size()) + " trials");
  }
  if (results.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (results[i].status == ContractionStatus::empty_set) continue;
    ok += score_trial(net, results[i], trials[i], cfg).credible;
  }
  return static_cast<double>(ok) / static_cast<double>(results.size());
}

struct WidthMetrics {
  double wid_avr = 0.0;  // average final state width
  double ratio = 1.0;    // summed final / initial measurement widths
};

inline WidthMetrics width_metrics(const ContractionResult& r) {
  WidthMetrics m;
  if (r.width_history.empty()) return m;
  const WidthSample& first = r.width_history.front();
  const WidthSample& last = r.width_history.back();
  m.wid_avr = last.state;
  // Both entries average over the same slots, so the ratio of averages is
  // the ratio of sums.
  m.ratio = first.measurement > 0.0 ? last.measurement / first.measurement : 1.0;
  return m;
}

inline nlohmann::json trial_to_json(const TrialRecord& t) {
  auto table = [](const std::vector<std::array<double, 3>>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : v) out.push_back({row[0], row[1], row[2]});
    return out;
  };
  return {{"seed", t.seed},
          {"loading", {{"p", table(t.loading.p)}, {"q", table(t.loading.q)}}},
          {"true_state",
           {{"e", table(t.true_state.e)},
            {"f", table(t.true_state.f)},
            {"i_re", table(t.true_state.i_re)},
            {"i_im", table(t.true_state.i_im)}}},
          {"true_measurements", t.true_measurements},
          {"measurements", measurements_to_json(t.measurements)["measurements"]}};
}

struct TrialOutcome {
  TrialRecord trial;
  ContractionResult result;
};

/// Runs estimator(sys, trial) over independently seeded trials. Output is
/// ordered by trial index and does not depend on the thread count.
template <class Estimator>
std::vector<TrialOutcome> run_monte_carlo(const ThreePhaseNetwork& net, const Loading& nominal,
                                          const MeasurementSet& placement, const NoiseConfig& noise,
                                          std::uint64_t base_seed, std::size_t trials, unsigned threads,
                                          Estimator&& estimator) {
  std::vector<TrialOutcome> out(trials);
  parallel_for(trials, threads, [&](std::size_t i) {
    TrialRecord t = synthesize_trial(net, nominal, placement, noise, trial_seed(base_seed, i));
    const ResidualSystem sys = build_residuals(net, t.measurements);
    out[i].result = estimator(sys, t);
    out[i].trial = std::move(t);
  });
  return out;
}

}  // namespace rdmise
