// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rdmise/contractor.hpp"
#include "rdmise/icp.hpp"
#include "rdmise/network_io.hpp"
#include "rdmise/oracle.hpp"
#include "rdmise/rdm.hpp"

namespace fs = std::filesystem;
using namespace rdmise;

namespace {

const fs::path kData = RDMISE_DATA_DIR;
const char* const kFeeders[] = {"feeder2.json", "feeder6.json", "feeder33.json"};

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Bundled {
  ThreePhaseNetwork net;
  MeasurementSet meas;
  ResidualSystem sys;
  std::vector<Interval> box;
};

Bundled bundled(const std::string& name) {
  ThreePhaseNetwork net = load_network(kData / name);
  MeasurementSet meas = load_measurements(kData / name, net);
  ResidualSystem sys = build_residuals(net, meas);
  std::vector<Interval> box = sys.make_box(initial_state_box(net, meas), meas);
  return {std::move(net), std::move(meas), std::move(sys), std::move(box)};
}

int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// x - x^2 on [1, 2] in three algebraically equal forms.
Verdict criterion1() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const Interval xi(1, 2);
  const Interval classic[3] = {xi - xi * xi, xi * (1.0 - xi), -1.0 + xi + (1.0 - xi) * (1.0 + xi)};
  RdmRegistry reg;
  const RdmExpr x = rdm_lift(xi, RdmVarId{0}, reg);
  const Interval rdm[3] = {rdm_span(x - x * x), rdm_span(x * (1.0 - x)), rdm_span(-1.0 + x + (1.0 - x) * (1.0 + x))};
  const Interval want_classic[3] = {Interval(-3, 1), Interval(-2, 0), Interval(-3, 1)};
  for (int k = 0; k < 3; ++k) {
    v.require(rdm[k] == Interval(-2, 0), "rdm f" + std::to_string(k + 1));
    v.require(classic[k] == want_classic[k], "classic f" + std::to_string(k + 1));
    v.detail << " f" << k + 1 << ": rdm " << rdm[k] << " classic " << classic[k] << ";";
  }
  const double dt = seconds_since(t0);
  v.require(dt < 1.0, "runtime");
  v.detail << " " << dt << " s";
  return v;
}

Verdict criterion2() {
  Verdict v;
  constexpr std::size_t kTrials = 100;
  const auto t0 = std::chrono::steady_clock::now();
  for (const char* name : {"feeder6.json", "feeder33.json"}) {
    const ThreePhaseNetwork net = load_network(kData / name);
    const MeasurementSet placement = load_measurements(kData / name, net);
    const NoiseConfig noise{{}, 0.1};
    for (const char* method : {"rdm", "icp"}) {
      const std::string m = method;
      const auto t1 = std::chrono::steady_clock::now();
      const auto outcomes = run_monte_carlo(net, Loading::from_network(net), placement, noise, 2024, kTrials, 1,
                                            [&](const ResidualSystem& sys, const TrialRecord& t) {
                                              const auto box = sys.make_box(initial_state_box(net, t.measurements),
                                                                            t.measurements);
                                              return m == "rdm" ? run_contractor(sys, box) : icp_contract(sys, box);
                                            });
      std::vector<ContractionResult> results;
      std::vector<TrialRecord> trials;
      for (const auto& o : outcomes) {
        results.push_back(o.result);
        trials.push_back(o.trial);
      }
      const double c = credibility(net, results, trials);
      v.require(c == 1.0, std::string(name) + " " + m);
      v.detail << " " << net.name() << "/" << m << ": C=" << c << " (" << seconds_since(t1) << " s);";
    }
  }
  const double dt = seconds_since(t0);
  v.detail << " " << kTrials << " trials each, total " << dt << " s" << (dt < 600.0 ? "" : " (over the 10 min target)");
  return v;
}

Verdict criterion3() {
  Verdict v;
  for (const char* name : kFeeders) {
    const Bundled b = bundled(name);
    const WidthMetrics rdm = width_metrics(run_contractor(b.sys, b.box));
    const WidthMetrics icp = width_metrics(icp_contract(b.sys, b.box));
    v.require(rdm.wid_avr <= icp.wid_avr, std::string(name) + " wid_avr");
    v.require(rdm.ratio <= icp.ratio, std::string(name) + " ratio");
    if (std::string(name) == "feeder33.json") {
      v.require(rdm.wid_avr < icp.wid_avr || rdm.ratio < icp.ratio, "33-bus strict");
    }
    v.detail << " " << b.net.name() << ": wid " << rdm.wid_avr << " vs " << icp.wid_avr << ", ratio " << rdm.ratio
             << " vs " << icp.ratio << ";";
  }
  return v;
}

Verdict criterion4() {
  Verdict v;
  const Bundled b = bundled("feeder6.json");
  const ContractionResult r = run_contractor(b.sys, b.box);
  std::size_t pseudo = 0, shrunk = 0;
  for (std::size_t k = 0; k < b.meas.size(); ++k) {
    if (!b.meas[k].is_pseudo) continue;
    ++pseudo;
    shrunk += r.final_measurements[k].width() < b.meas[k].interval().width();
  }
  v.require(shrunk >= 1, "no pseudo-measurement shrank");
  v.require(width_metrics(r).ratio < 1.0, "ratio < 1");
  v.detail << " " << shrunk << " of " << pseudo << " pseudo-measurements narrowed, ratio " << width_metrics(r).ratio;
  return v;
}

Verdict criterion5() {
  Verdict v;
  for (const char* name : kFeeders) {
    const Bundled b = bundled(name);
    const ContractionResult r = run_contractor(b.sys, b.box);
    bool monotone = true;
    for (std::size_t k = 1; k < r.width_history.size(); ++k) {
      monotone = monotone && r.width_history[k].state <= r.width_history[k - 1].state &&
                 r.width_history[k].measurement <= r.width_history[k - 1].measurement;
    }
    v.require(monotone, std::string(name) + " monotone");
    v.require(r.status == ContractionStatus::converged && r.iterations_used <= 50, std::string(name) + " terminates");
    if (std::string(name) == "feeder6.json") v.require(r.iterations_used <= 10, "6-bus plateau within 10");
    v.detail << " " << b.net.name() << ": " << status_name(r.status) << " in " << r.iterations_used << ";";
  }
  return v;
}

Verdict criterion6() {
  Verdict v;
  const std::vector<std::pair<std::string, std::string>> suites = {
      {RDMISE_INTERVAL_TEST, "IntervalProperty.*"},
      {RDMISE_RDM_TEST, "RdmProperty.*"},
      {RDMISE_EQUATIONS_TEST, "EquationsProperty.*"},
      {RDMISE_CONTRACTOR_TEST, "*LinearizationSoundness.*"},
      {RDMISE_LP_TEST, "LpProperty.*:BasisFactorProperty.*"},
      {RDMISE_ORACLE_TEST, "PowerFlow.ResidualsVanishAtSolution:SynthesisProperty.*"},
      {RDMISE_ICP_TEST, "IcpProperty.*"},
  };
  for (const auto& [bin, filter] : suites) {
    const int code = run_command(bin + " --gtest_filter='" + filter + "'");
    v.require(code == 0, filter);
    v.detail << " " << filter << (code == 0 ? " ok;" : " FAILED;");
  }
  return v;
}

Verdict criterion7() {
  Verdict v;
  const ThreePhaseNetwork net = load_network(kData / "feeder6.json");
  MeasurementSet meas = load_measurements(kData / "feeder6.json", net);
  for (Measurement& m : meas) {
    if (m.kind != MeasurementKind::V_sq) continue;
    m.value *= 1.5;
    m.err_lo = -0.01 * m.value;
    m.err_hi = 0.01 * m.value;
    break;
  }
  const ResidualSystem sys = build_residuals(net, meas);
  const ContractorConfig cfg;
  const ContractionResult r = run_contractor(sys, sys.make_box(initial_state_box(net, meas), meas), cfg);
  v.require(r.status == ContractionStatus::empty_set, "status");
  v.require(r.empty_iteration >= 1 && r.empty_iteration <= cfg.max_iterations, "iteration");

  const fs::path file = fs::temp_directory_path() / ("rdmise_accept_" + std::to_string(::getpid()) + ".json");
  std::ofstream(file) << measurements_to_json(meas).dump();
  const int code = run_command(std::string(RDMISE_CLI) + " estimate --network " + (kData / "feeder6.json").string() +
                               " --measurements " + file.string());
  fs::remove(file);
  v.require(code == 3, "exit code");
  v.detail << " empty set at iteration " << r.empty_iteration << " (" << r.message << "), CLI exit " << code;
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4},
      {5, criterion5}, {6, criterion6}, {7, criterion7},
  };
  int failed = 0;
  for (const auto& [id, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " exception: " << e.what();
    }
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " -" << v.detail.str() << std::endl;
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
