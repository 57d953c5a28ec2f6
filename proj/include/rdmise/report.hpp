#pragma once

#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rdmise/equations.hpp"
#include "rdmise/oracle.hpp"
#include "rdmise/result.hpp"

namespace rdmise {

inline constexpr int kReportSchemaVersion = 1;

/// Width history as parallel columns: iteration, state, measurement.
inline nlohmann::json width_history_columns(const ContractionResult& r) {
  nlohmann::json it = nlohmann::json::array(), st = nlohmann::json::array(), me = nlohmann::json::array();
  for (std::size_t k = 0; k < r.width_history.size(); ++k) {
    it.push_back(k);
    st.push_back(r.width_history[k].state);
    me.push_back(r.width_history[k].measurement);
  }
  return {{"iteration", it}, {"state", st}, {"measurement", me}};
}

inline nlohmann::json result_to_json(const ResidualSystem& sys, const ContractionResult& r) {
  const WidthMetrics m = width_metrics(r);
  nlohmann::json q = nlohmann::json::array();
  for (std::size_t j = 0; j < r.final_box.size(); ++j) {
    q.push_back({{"quantity", sys.label(QuantityId{static_cast<std::uint32_t>(j)})},
                 {"lo", r.final_box[j].lo()},
                 {"hi", r.final_box[j].hi()}});
  }
  nlohmann::json out = {{"status", status_name(r.status)},
                        {"iterations", r.iterations_used},
                        {"wid_avr", m.wid_avr},
                        {"ratio", m.ratio},
                        {"width_history", width_history_columns(r)},
                        {"final", q}};
  if (r.status == ContractionStatus::empty_set) {
    out["message"] = r.message;
    out["empty_iteration"] = r.empty_iteration;
  }
  return out;
}

namespace detail {

inline std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace detail

/// method,quantity,lo,hi
inline std::string intervals_csv(const std::vector<std::pair<std::string, const ContractionResult*>>& runs,
                                 const ResidualSystem& sys) {
  std::string out = "method,quantity,lo,hi\n";
  for (const auto& [method, r] : runs) {
    for (std::size_t j = 0; j < r->final_box.size(); ++j) {
      out += method + "," + sys.label(QuantityId{static_cast<std::uint32_t>(j)}) + "," +
             detail::csv_number(r->final_box[j].lo()) + "," + detail::csv_number(r->final_box[j].hi()) + "\n";
    }
  }
  return out;
}

/// method,iteration,state_width,measurement_width
inline std::string history_csv(const std::vector<std::pair<std::string, const ContractionResult*>>& runs) {
  std::string out = "method,iteration,state_width,measurement_width\n";
  for (const auto& [method, r] : runs) {
    for (std::size_t k = 0; k < r->width_history.size(); ++k) {
      out += method + "," + std::to_string(k) + "," + detail::csv_number(r->width_history[k].state) + "," +
             detail::csv_number(r->width_history[k].measurement) + "\n";
    }
  }
  return out;
}

}  // namespace rdmise
