#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include "rdmise/errors.hpp"
#include "rdmise/network.hpp"

namespace rdmise {

/// Constant-power loads per bus/phase in p.u. (positive = consumed).
struct Loading {
  std::vector<std::array<double, 3>> p, q;

  static Loading from_network(const ThreePhaseNetwork& net) {
    Loading l;
    for (const Bus& b : net.buses()) {
      l.p.push_back(b.load_p);
      l.q.push_back(b.load_q);
    }
    return l;
  }

  static Loading zero(const ThreePhaseNetwork& net) {
    Loading l;
    l.p.assign(net.buses().size(), {0, 0, 0});
    l.q.assign(net.buses().size(), {0, 0, 0});
    return l;
  }
};

struct PowerFlowOptions {
  int max_sweeps = 200;
  double voltage_tol = 1e-14;
  // Power mismatch accepted after convergence.
  double residual_tol = 1e-10;
};

/// Three-phase backward/forward sweep on a radial feeder.
inline StatePoint power_flow(const ThreePhaseNetwork& net, const Loading& load,
                             const PowerFlowOptions& opts = {}) {
  using C = std::complex<double>;
  const auto& buses = net.buses();
  const auto& branches = net.branches();
  const std::size_t nb = buses.size();
  const std::size_t nl = branches.size();
  if (load.p.size() != nb || load.q.size() != nb) throw LengthMismatch("loading size != bus count");

  std::array<C, 3> slack{};
  for (Phase p : kAllPhases) {
    const auto [re, im] = net.slack_voltage(p);
    slack[idx(p)] = C(re, im);
  }
  std::vector<std::array<C, 3>> v(nb, slack);
  std::vector<std::array<C, 3>> i_br(nl, {C{}, C{}, C{}});
  const auto& order = net.bfs_order();

  auto load_current = [&](std::size_t b, Phase p) {
    const C s(load.p[b][idx(p)], load.q[b][idx(p)]);
    return std::conj(s / v[b][idx(p)]);
  };

  auto mismatch = [&]() {
    double worst = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      if (net.is_reference(b)) continue;
      for (Phase p : buses[b].phases.list()) {
        C inj{};
        if (auto k = net.parent_branch(b)) inj += i_br[*k][idx(p)];
        for (std::size_t k : net.child_branches(b))
          if (branches[k].phases.has(p)) inj -= i_br[k][idx(p)];
        const C s = v[b][idx(p)] * std::conj(inj);
        worst = std::max(worst, std::abs(s - C(load.p[b][idx(p)], load.q[b][idx(p)])));
      }
    }
    for (std::size_t k = 0; k < nl; ++k) {
      const Branch& br = branches[k];
      for (Phase s : br.phases.list()) {
        C drop{};
        for (Phase p : br.phases.list())
          drop += C(br.r[idx(s)][idx(p)], br.x[idx(s)][idx(p)]) * i_br[k][idx(p)];
        worst = std::max(worst, std::abs(v[br.from][idx(s)] - v[br.to][idx(s)] - drop));
      }
    }
    return worst;
  };

  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    // Backward: accumulate currents from the leaves.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t b = *it;
      const auto k = net.parent_branch(b);
      if (!k) continue;
      for (Phase p : branches[*k].phases.list()) {
        C sum = load_current(b, p);
        for (std::size_t c : net.child_branches(b))
          if (branches[c].phases.has(p)) sum += i_br[c][idx(p)];
        i_br[*k][idx(p)] = sum;
      }
    }
    // Forward: voltage drops from the root.
    double change = 0.0;
    for (std::size_t b : order) {
      const auto k = net.parent_branch(b);
      if (!k) continue;
      const Branch& br = branches[*k];
      for (Phase s : br.phases.list()) {
        C drop{};
        for (Phase p : br.phases.list())
          drop += C(br.r[idx(s)][idx(p)], br.x[idx(s)][idx(p)]) * i_br[*k][idx(p)];
        const C nv = v[br.from][idx(s)] - drop;
        change = std::max(change, std::abs(nv - v[b][idx(s)]));
        v[b][idx(s)] = nv;
      }
    }
    if (change <= opts.voltage_tol || (sweep > 0 && mismatch() <= 1e-13)) {
      // One more backward pass keeps currents consistent with the final voltages.
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t b = *it;
        const auto k = net.parent_branch(b);
        if (!k) continue;
        for (Phase p : branches[*k].phases.list()) {
          C sum = load_current(b, p);
          for (std::size_t c : net.child_branches(b))
            if (branches[c].phases.has(p)) sum += i_br[c][idx(p)];
          i_br[*k][idx(p)] = sum;
        }
      }
      if (mismatch() > opts.residual_tol) continue;
      StatePoint out;
      out.e.assign(nb, {0, 0, 0});
      out.f.assign(nb, {0, 0, 0});
      out.i_re.assign(nl, {0, 0, 0});
      out.i_im.assign(nl, {0, 0, 0});
      for (std::size_t b = 0; b < nb; ++b) {
        for (Phase p : buses[b].phases.list()) {
          out.e[b][idx(p)] = v[b][idx(p)].real();
          out.f[b][idx(p)] = v[b][idx(p)].imag();
        }
      }
      for (std::size_t k = 0; k < nl; ++k) {
        for (Phase p : branches[k].phases.list()) {
          out.i_re[k][idx(p)] = i_br[k][idx(p)].real();
          out.i_im[k][idx(p)] = i_br[k][idx(p)].imag();
        }
      }
      return out;
    }
  }
  throw NoConvergence("power flow did not converge in " + std::to_string(opts.max_sweeps) + " sweeps");
}

}  // namespace rdmise
