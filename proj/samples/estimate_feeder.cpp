// Synthesizes one noisy measurement set on a bundled feeder, contracts the
// state box with both estimators and prints the resulting widths.
//
//   estimate_feeder [network.json] [seed]

#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "rdmise/contractor.hpp"
#include "rdmise/icp.hpp"
#include "rdmise/network_io.hpp"
#include "rdmise/oracle.hpp"

int main(int argc, char** argv) {
  using namespace rdmise;
  const std::string path = argc > 1 ? argv[1] : std::string(RDMISE_DATA_DIR) + "/feeder6.json";
  const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 1;

  const ThreePhaseNetwork net = load_network(path);
  const MeasurementSet placement = load_measurements(path, net);

  // Truth from a power flow, measurements with +-1% (real) and +-10% (pseudo) bounds.
  const TrialRecord trial = synthesize_trial(net, Loading::from_network(net), placement, {}, seed);
  const ResidualSystem sys = build_residuals(net, trial.measurements);
  const std::vector<Interval> box = sys.make_box(initial_state_box(net, trial.measurements), trial.measurements);

  const ContractionResult rdm = run_contractor(sys, box);
  const ContractionResult icp = icp_contract(sys, box);

  std::cout << net.name() << ": " << sys.size() << " quantities, " << sys.equations().size() << " residuals\n";
  std::cout << std::setprecision(6);
  for (const auto& [name, r] : {std::pair{"rdm", &rdm}, std::pair{"icp", &icp}}) {
    const WidthMetrics m = width_metrics(*r);
    std::cout << name << ": " << status_name(r->status) << " after " << r->iterations_used
              << " iterations, wid_avr " << m.wid_avr << ", ratio " << m.ratio << ", truth inside "
              << (score_trial(net, *r, trial).credible ? "yes" : "no") << "\n";
  }

  // Voltage magnitude bounds of the last bus on its first phase.
  const std::size_t last = net.buses().size() - 1;
  const Phase p = net.buses()[last].phases.list().front();
  const Interval v = rdm.final_states.v_sq(last, p);
  std::cout << "bus " << net.buses()[last].id << phase_char(p) << " |V| in [" << std::sqrt(v.lo()) << ", "
            << std::sqrt(v.hi()) << "], true " << std::hypot(trial.true_state.e[last][idx(p)], trial.true_state.f[last][idx(p)])
            << "\n";
  return rdm.status == ContractionStatus::empty_set ? 1 : 0;
}
