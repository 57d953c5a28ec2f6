#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rdmise/network.hpp"

namespace rdmise {

inline constexpr int kNetworkFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Number -> same value on every present phase; array -> per phase a, b, c.
inline std::array<double, 3> per_phase(const json& j, PhaseSet phases, const std::string& tag) {
  std::array<double, 3> out{};
  if (j.is_number()) {
    for (Phase p : phases.list()) out[idx(p)] = j.get<double>();
  } else if (j.is_array() && j.size() == 3) {
    for (std::size_t i = 0; i < 3; ++i) out[i] = j[i].get<double>();
  } else {
    throw ParseError(tag + ": expected a number or an array of 3");
  }
  return out;
}

// Scalar -> diagonal matrix; otherwise a full 3x3.
inline Matrix3 matrix3(const json& j, const std::string& tag) {
  Matrix3 m{};
  if (j.is_number()) {
    for (std::size_t i = 0; i < 3; ++i) m[i][i] = j.get<double>();
    return m;
  }
  if (!j.is_array() || j.size() != 3) throw ParseError(tag + ": expected scalar or 3x3 matrix");
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_array() || j[i].size() != 3) throw ParseError(tag + ": expected 3x3 matrix");
    for (std::size_t k = 0; k < 3; ++k) m[i][k] = j[i][k].get<double>();
  }
  return m;
}

}  // namespace detail

inline ThreePhaseNetwork network_from_json(const nlohmann::json& j) {
  using detail::json;
  std::string where = "network";
  try {
    const int version = j.value("format_version", kNetworkFormatVersion);
    if (version != kNetworkFormatVersion) {
      throw ParseError("unsupported format_version " + std::to_string(version));
    }
    PowerBase base;
    base.kva = j.at("base").at("kva").get<double>();
    base.kv = j.at("base").at("kv").get<double>();
    SlackVoltage slack;
    if (j.contains("slack_voltage")) {
      const json& s = j.at("slack_voltage");
      if (s.contains("magnitude")) slack.magnitude = s.at("magnitude").get<std::array<double, 3>>();
      if (s.contains("angle_deg")) slack.angle_deg = s.at("angle_deg").get<std::array<double, 3>>();
    }
    std::vector<Bus> buses;
    for (const json& jb : j.at("buses")) {
      Bus b;
      b.id = jb.at("id").get<int>();
      where = "bus " + std::to_string(b.id);
      b.phases = PhaseSet::parse(jb.value("phases", std::string("abc")));
      const auto kw = detail::per_phase(jb.value("load_kw", json(0.0)), b.phases, where);
      const auto kvar = detail::per_phase(jb.value("load_kvar", json(0.0)), b.phases, where);
      for (std::size_t i = 0; i < 3; ++i) {
        b.load_p[i] = kw[i] / base.kva;
        b.load_q[i] = kvar[i] / base.kva;
      }
      b.zero_injection = jb.value("zero_injection", false);
      buses.push_back(b);
    }
    std::vector<BranchSpec> branches;
    for (const json& jl : j.at("branches")) {
      BranchSpec s;
      s.id = jl.at("id").get<int>();
      where = "branch " + std::to_string(s.id);
      s.from = jl.at("from").get<int>();
      s.to = jl.at("to").get<int>();
      s.r_ohm = detail::matrix3(jl.at("r_ohm"), where + " r_ohm");
      s.x_ohm = detail::matrix3(jl.at("x_ohm"), where + " x_ohm");
      branches.push_back(s);
    }
    where = "network";
    return ThreePhaseNetwork::build(j.value("name", std::string()), base, std::move(buses), branches,
                                    j.at("reference_bus").get<int>(), slack);
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
}

inline ThreePhaseNetwork load_network(const std::filesystem::path& path) {
  return network_from_json(detail::read_json_file(path));
}

/// Canonical form: per-phase arrays, full impedance matrices in ohms,
/// branches oriented parent to child.
inline nlohmann::json network_to_json(const ThreePhaseNetwork& net) {
  using detail::json;
  const PowerBase& base = net.base();
  json j;
  j["format_version"] = kNetworkFormatVersion;
  j["name"] = net.name();
  j["base"] = {{"kva", base.kva}, {"kv", base.kv}};
  j["reference_bus"] = net.buses()[net.reference()].id;
  j["slack_voltage"] = {{"magnitude", net.slack().magnitude}, {"angle_deg", net.slack().angle_deg}};
  json buses = json::array();
  for (const Bus& b : net.buses()) {
    std::array<double, 3> kw{}, kvar{};
    for (std::size_t i = 0; i < 3; ++i) {
      kw[i] = b.load_p[i] * base.kva;
      kvar[i] = b.load_q[i] * base.kva;
    }
    buses.push_back({{"id", b.id},
                     {"phases", b.phases.str()},
                     {"load_kw", kw},
                     {"load_kvar", kvar},
                     {"zero_injection", b.zero_injection}});
  }
  j["buses"] = buses;
  const double zb = base.z_base_ohm();
  json branches = json::array();
  for (const Branch& br : net.branches()) {
    Matrix3 r{}, x{};
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t p = 0; p < 3; ++p) {
        r[s][p] = br.r[s][p] * zb;
        x[s][p] = br.x[s][p] * zb;
      }
    }
    branches.push_back({{"id", br.id},
                        {"from", net.buses()[br.from].id},
                        {"to", net.buses()[br.to].id},
                        {"r_ohm", r},
                        {"x_ohm", x}});
  }
  j["branches"] = branches;
  return j;
}

inline void save_network(const ThreePhaseNetwork& net, const std::filesystem::path& path) {
  detail::write_text_atomic(path, network_to_json(net).dump(2) + "\n");
}

// ---- measurements ----------------------------------------------------------

/// Reads the `measurements` array of j. Missing err_lo/err_hi default to the
/// accuracy class of the instrument.
inline MeasurementSet measurements_from_json(const nlohmann::json& j, const ThreePhaseNetwork& net,
                                             AccuracyClass acc = {}) {
  using detail::json;
  MeasurementSet raw;
  std::size_t n = 0;
  try {
    for (const json& jm : j.at("measurements")) {
      Measurement m;
      m.kind = parse_kind(jm.at("kind").get<std::string>());
      const char* key = at_bus(m.kind) ? "bus" : "branch";
      if (!jm.contains(key)) {
        throw ParseError("measurement #" + std::to_string(n) + ": missing '" + key + "'");
      }
      m.location = jm.at(key).get<int>();
      m.phase = parse_phase(jm.value("phase", std::string("a")));
      m.value = jm.at("value").get<double>();
      m.is_pseudo = jm.value("pseudo", false);
      const bool has_lo = jm.contains("err_lo");
      const bool has_hi = jm.contains("err_hi");
      if (has_lo != has_hi) {
        throw ParseError("measurement #" + std::to_string(n) + ": give both err_lo and err_hi");
      }
      if (has_lo) {
        m.err_lo = jm.at("err_lo").get<double>();
        m.err_hi = jm.at("err_hi").get<double>();
      } else {
        apply_default_error(m, acc);
      }
      raw.push_back(m);
      ++n;
    }
  } catch (const json::exception& e) {
    throw ParseError("measurement #" + std::to_string(n) + ": " + e.what());
  }
  return validate_measurements(std::move(raw), net);
}

inline MeasurementSet load_measurements(const std::filesystem::path& path, const ThreePhaseNetwork& net,
                                        AccuracyClass acc = {}) {
  return measurements_from_json(detail::read_json_file(path), net, acc);
}

inline nlohmann::json measurements_to_json(const MeasurementSet& ms) {
  using detail::json;
  json arr = json::array();
  for (const Measurement& m : ms) {
    arr.push_back({{"kind", kind_name(m.kind)},
                   {at_bus(m.kind) ? "bus" : "branch", m.location},
                   {"phase", std::string(1, phase_char(m.phase))},
                   {"value", m.value},
                   {"err_lo", m.err_lo},
                   {"err_hi", m.err_hi},
                   {"pseudo", m.is_pseudo}});
  }
  return {{"format_version", kNetworkFormatVersion}, {"measurements", arr}};
}

}  // namespace rdmise
