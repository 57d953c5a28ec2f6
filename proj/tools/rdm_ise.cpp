// rdm-ise: batch front-end for the interval state estimators.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "rdmise/contractor.hpp"
#include "rdmise/icp.hpp"
#include "rdmise/network_io.hpp"
#include "rdmise/oracle.hpp"
#include "rdmise/power_flow.hpp"
#include "rdmise/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rdmise;

namespace {

enum ExitCode { kOk = 0, kParse = 2, kEmptySet = 3, kNoConvergence = 4, kInternal = 5 };

struct Options {
  std::string network;
  std::string measurements;
  std::string method = "rdm";
  std::string out;
  std::string format = "json";
  std::string relaxation = "mv+env";
  std::string expansion = "inf";
  std::string trials_out;
  std::string noisy_out;
  double tol = 1e-6;
  int max_iter = 50;
  int max_sweeps = 200;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double real_acc = 0.01;
  double pseudo_acc = 0.10;
  double load_variation = 0.0;
  bool no_timing = false;
};

AccuracyClass accuracy(const Options& o) { return {o.real_acc, o.pseudo_acc}; }

ContractorConfig contractor_config(const Options& o, unsigned threads) {
  ContractorConfig c;
  c.width_tolerance = o.tol;
  c.max_iterations = o.max_iter;
  c.quadratic_relaxation = o.relaxation == "mv" ? QuadraticRelaxation::mean_value_only
                                                : QuadraticRelaxation::mean_value_plus_envelopes;
  c.expansion = o.expansion == "mid" ? ExpansionPoint::midpoint : ExpansionPoint::infimum;
  c.threads = threads;
  return c;
}

IcpConfig icp_config(const Options& o) {
  IcpConfig c;
  c.width_tolerance = o.tol;
  c.max_sweeps = o.max_sweeps;
  return c;
}

std::vector<std::string> methods(const Options& o) {
  if (o.method == "both") return {"rdm", "icp"};
  return {o.method};
}

ContractionResult estimate_with(const std::string& method, const Options& o, const ResidualSystem& sys,
                                const std::vector<Interval>& box, unsigned threads) {
  if (method == "icp") return icp_contract(sys, box, icp_config(o));
  return run_contractor(sys, box, contractor_config(o, threads));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string measurements_path(const Options& o) { return o.measurements.empty() ? o.network : o.measurements; }

json header(const std::string& command, const ThreePhaseNetwork& net) {
  return {{"schema", "rdm-ise-report"},
          {"schema_version", kReportSchemaVersion},
          {"command", command},
          {"network", net.name()}};
}

void emit(const Options& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
  } else {
    detail::write_text_atomic(o.out, text);
    spdlog::info("wrote {}", o.out);
  }
}

// Sibling file for the extra CSV tables: report.csv -> report_history.csv.
fs::path sibling(const std::string& out, const std::string& suffix) {
  fs::path p(out);
  return p.parent_path() / (p.stem().string() + suffix + p.extension().string());
}

int run_estimate(const Options& o) {
  const ThreePhaseNetwork net = load_network(o.network);
  const MeasurementSet meas = load_measurements(measurements_path(o), net, accuracy(o));
  const ResidualSystem sys = build_residuals(net, meas);
  const std::vector<Interval> box = sys.make_box(initial_state_box(net, meas), meas);
  spdlog::info("{}: {} quantities, {} residuals", net.name(), sys.size(), sys.equations().size());

  std::vector<std::pair<std::string, ContractionResult>> runs;
  json report = header("estimate", net);
  bool empty = false;
  for (const std::string& m : methods(o)) {
    const auto t0 = std::chrono::steady_clock::now();
    ContractionResult r = estimate_with(m, o, sys, box, o.threads);
    const double dt = seconds_since(t0);
    spdlog::info("{}: {} after {} iterations", m, status_name(r.status), r.iterations_used);
    if (r.status == ContractionStatus::empty_set) {
      spdlog::error("{}: empty solution set: {}", m, r.message);
      empty = true;
    }
    report["methods"][m] = result_to_json(sys, r);
    if (!o.no_timing) report["methods"][m]["seconds"] = dt;
    runs.emplace_back(m, std::move(r));
  }

  if (o.format == "csv") {
    std::vector<std::pair<std::string, const ContractionResult*>> refs;
    for (const auto& [m, r] : runs) refs.emplace_back(m, &r);
    emit(o, intervals_csv(refs, sys));
    if (!o.out.empty()) {
      detail::write_text_atomic(sibling(o.out, "_history"), history_csv(refs));
      std::string summary = "method,status,iterations,wid_avr,ratio\n";
      for (const auto& [m, r] : runs) {
        const WidthMetrics wm = width_metrics(r);
        summary += m + "," + status_name(r.status) + "," + std::to_string(r.iterations_used) + "," +
                   detail::csv_number(wm.wid_avr) + "," + detail::csv_number(wm.ratio) + "\n";
      }
      detail::write_text_atomic(sibling(o.out, "_summary"), summary);
    }
  } else {
    emit(o, report.dump(2) + "\n");
  }
  return empty ? kEmptySet : kOk;
}

int run_montecarlo(const Options& o) {
  const ThreePhaseNetwork net = load_network(o.network);
  const MeasurementSet placement = load_measurements(measurements_path(o), net, accuracy(o));
  const Loading nominal = Loading::from_network(net);
  const NoiseConfig noise{accuracy(o), o.load_variation};

  json report = header("montecarlo", net);
  report["trials"] = o.trials;
  report["seed"] = o.seed;
  report["noise"] = {{"real", o.real_acc}, {"pseudo", o.pseudo_acc}, {"load_variation", o.load_variation}};
  std::string csv = "method,trial,seed,status,iterations,wid_avr,ratio,states_inside,measurements_inside\n";
  std::vector<TrialRecord> records;

  for (const std::string& m : methods(o)) {
    const auto t0 = std::chrono::steady_clock::now();
    // Trials run in parallel; each estimate is single-threaded.
    const auto outcomes = run_monte_carlo(net, nominal, placement, noise, o.seed, o.trials, o.threads,
                                          [&](const ResidualSystem& sys, const TrialRecord& t) {
                                            const auto box =
                                                sys.make_box(initial_state_box(net, t.measurements), t.measurements);
                                            return estimate_with(m, o, sys, box, 1);
                                          });
    const double dt = seconds_since(t0);
    std::vector<ContractionResult> results;
    std::vector<TrialRecord> trials;
    json per_trial = json::array();
    double wid = 0.0, ratio = 0.0;
    std::size_t empty = 0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      const auto& [t, r] = outcomes[i];
      const WidthMetrics wm = width_metrics(r);
      const bool is_empty = r.status == ContractionStatus::empty_set;
      const TrialScore s = is_empty ? TrialScore{} : score_trial(net, r, t);
      empty += is_empty;
      wid += wm.wid_avr;
      ratio += wm.ratio;
      per_trial.push_back({{"seed", t.seed},
                           {"status", status_name(r.status)},
                           {"iterations", r.iterations_used},
                           {"wid_avr", wm.wid_avr},
                           {"ratio", wm.ratio},
                           {"states_inside", s.states_inside},
                           {"measurements_inside", s.measurements_inside}});
      csv += m + "," + std::to_string(i) + "," + std::to_string(t.seed) + "," + status_name(r.status) + "," +
             std::to_string(r.iterations_used) + "," + detail::csv_number(wm.wid_avr) + "," +
             detail::csv_number(wm.ratio) + "," + detail::csv_number(s.states_inside) + "," +
             detail::csv_number(s.measurements_inside) + "\n";
      results.push_back(r);
      trials.push_back(t);
    }
    const double n = outcomes.empty() ? 1.0 : static_cast<double>(outcomes.size());
    const double c = credibility(net, results, trials);
    spdlog::info("{}: credibility {} over {} trials", m, c, outcomes.size());
    json& mj = report["methods"][m];
    mj = {{"credibility", c},
          {"mean_wid_avr", wid / n},
          {"mean_ratio", ratio / n},
          {"empty_sets", empty},
          {"per_trial", per_trial}};
    if (!o.no_timing) mj["seconds"] = dt;
    if (records.empty()) records = std::move(trials);
  }

  if (!o.trials_out.empty()) {
    json arr = json::array();
    for (const TrialRecord& t : records) arr.push_back(trial_to_json(t));
    detail::write_text_atomic(o.trials_out, json{{"format_version", kReportSchemaVersion}, {"trials", arr}}.dump(1) + "\n");
  }
  emit(o, o.format == "csv" ? csv : report.dump(2) + "\n");
  return kOk;
}

int run_validate(const Options& o) {
  const ThreePhaseNetwork net = load_network(o.network);
  const MeasurementSet meas = load_measurements(measurements_path(o), net, accuracy(o));
  const ResidualSystem sys = build_residuals(net, meas);
  std::size_t pseudo = 0;
  for (const Measurement& m : meas) pseudo += m.is_pseudo;
  json report = header("validate", net);
  report["buses"] = net.buses().size();
  report["branches"] = net.branches().size();
  report["measurements"] = meas.size();
  report["pseudo_measurements"] = pseudo;
  report["quantities"] = sys.size();
  report["residuals"] = sys.equations().size();
  emit(o, report.dump(2) + "\n");
  return kOk;
}

int run_oracle(const Options& o) {
  const ThreePhaseNetwork net = load_network(o.network);
  Loading load = Loading::from_network(net);
  const StatePoint s = power_flow(net, load);
  json report = header("oracle", net);
  json buses = json::array();
  for (std::size_t b = 0; b < net.buses().size(); ++b) {
    for (Phase p : net.buses()[b].phases.list()) {
      buses.push_back({{"bus", net.buses()[b].id},
                       {"phase", std::string(1, phase_char(p))},
                       {"e", s.e[b][idx(p)]},
                       {"f", s.f[b][idx(p)]},
                       {"magnitude", std::hypot(s.e[b][idx(p)], s.f[b][idx(p)])}});
    }
  }
  json branches = json::array();
  for (std::size_t k = 0; k < net.branches().size(); ++k) {
    for (Phase p : net.branches()[k].phases.list()) {
      branches.push_back({{"branch", net.branches()[k].id},
                          {"phase", std::string(1, phase_char(p))},
                          {"i_re", s.i_re[k][idx(p)]},
                          {"i_im", s.i_im[k][idx(p)]}});
    }
  }
  report["buses"] = buses;
  report["branches"] = branches;

  const MeasurementSet placement = load_measurements(measurements_path(o), net, accuracy(o));
  const std::vector<double> z = true_measurement_values(net, placement, load, s);
  json truth = json::array();
  for (std::size_t k = 0; k < placement.size(); ++k) truth.push_back({{"measurement", placement[k].label()}, {"value", z[k]}});
  report["true_measurements"] = truth;

  if (!o.noisy_out.empty()) {
    const TrialRecord t = synthesize_trial(net, load, placement, {accuracy(o), o.load_variation}, o.seed);
    detail::write_text_atomic(o.noisy_out, measurements_to_json(t.measurements).dump(2) + "\n");
    spdlog::info("wrote synthesized measurements to {}", o.noisy_out);
  }
  emit(o, report.dump(2) + "\n");
  return kOk;
}

void configure_logging() {
  auto logger = spdlog::stderr_color_st("rdm-ise");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("RDM_ISE_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only "off" itself should do that.
    if (level != spdlog::level::off || std::string(env) == "off") spdlog::set_level(level);
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  Options o;
  CLI::App app{"Interval state estimation for three-phase distribution feeders"};
  app.require_subcommand(1);

  auto common = [&](CLI::App* sub) {
    sub->add_option("--network", o.network, "network JSON file")->required()->check(CLI::ExistingFile);
    sub->add_option("--measurements", o.measurements, "measurement JSON file (default: the network file)")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "report path (default: stdout)");
    sub->add_option("--real-acc", o.real_acc, "relative bound of real instruments")->check(CLI::NonNegativeNumber);
    sub->add_option("--pseudo-acc", o.pseudo_acc, "relative bound of pseudo measurements")
        ->check(CLI::NonNegativeNumber);
  };
  auto estimator_flags = [&](CLI::App* sub) {
    sub->add_option("--method", o.method, "estimator")->check(CLI::IsMember({"rdm", "icp", "both"}));
    sub->add_option("--tol", o.tol, "width tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--max-iter", o.max_iter, "contractor iteration limit")->check(CLI::PositiveNumber);
    sub->add_option("--max-sweeps", o.max_sweeps, "ICP sweep limit")->check(CLI::PositiveNumber);
    sub->add_option("--relaxation", o.relaxation, "quadratic relaxation")->check(CLI::IsMember({"mv", "mv+env"}));
    sub->add_option("--expansion", o.expansion, "linearization point")->check(CLI::IsMember({"inf", "mid"}));
    sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", o.format, "report format")->check(CLI::IsMember({"json", "csv"}));
    sub->add_flag("--no-timing", o.no_timing, "omit wall-clock fields for byte-identical reports");
  };

  CLI::App* estimate = app.add_subcommand("estimate", "contract the state box for one measurement set");
  common(estimate);
  estimator_flags(estimate);

  CLI::App* mc = app.add_subcommand("montecarlo", "credibility and width statistics over synthesized trials");
  common(mc);
  estimator_flags(mc);
  mc->add_option("--trials", o.trials, "number of trials")->check(CLI::PositiveNumber);
  mc->add_option("--seed", o.seed, "base seed");
  mc->add_option("--load-variation", o.load_variation, "relative load perturbation per trial")
      ->check(CLI::Range(0.0, 1.0));
  mc->add_option("--trials-out", o.trials_out, "also write the synthesized trials as JSON");

  CLI::App* validate = app.add_subcommand("validate", "check network and measurement files");
  common(validate);

  CLI::App* oracle = app.add_subcommand("oracle", "power flow at the nominal loading");
  common(oracle);
  oracle->add_option("--noisy-out", o.noisy_out, "write a synthesized measurement file");
  oracle->add_option("--seed", o.seed, "seed for --noisy-out");
  oracle->add_option("--load-variation", o.load_variation, "relative load perturbation for --noisy-out")
      ->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kParse;
  }

  try {
    if (*estimate) return run_estimate(o);
    if (*mc) return run_montecarlo(o);
    if (*validate) return run_validate(o);
    if (*oracle) return run_oracle(o);
  } catch (const InputError& e) {
    spdlog::error("{}", e.what());
    return kParse;
  } catch (const EmptySolutionSet& e) {
    spdlog::error("empty solution set: {}", e.what());
    return kEmptySet;
  } catch (const NoConvergence& e) {
    spdlog::error("{}", e.what());
    return kNoConvergence;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return kInternal;
  }
  return kInternal;
}
