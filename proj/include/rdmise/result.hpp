#pragma once

#include <string>
#include <vector>

#include "rdmise/equations.hpp"
#include "rdmise/interval.hpp"
#include "rdmise/network.hpp"

namespace rdmise {

enum class ContractionStatus { converged, iteration_limit, empty_set };

inline const char* status_name(ContractionStatus s) {
  switch (s) {
    case ContractionStatus::converged: return "converged";
    case ContractionStatus::iteration_limit: return "iteration_limit";
    case ContractionStatus::empty_set: return "empty_set";
  }
  return "?";
}

/// Average widths: states are non-reference e, f and all branch currents.
struct WidthSample {
  double state = 0.0;
  double measurement = 0.0;
};

struct ContractionResult {
  std::vector<Interval> final_box;  // every quantity of the residual system
  StateBox final_states;
  std::vector<Interval> final_measurements;
  int iterations_used = 0;
  // Entry 0 is the starting box, then one entry per iteration.
  std::vector<WidthSample> width_history;
  ContractionStatus status = ContractionStatus::converged;
  std::string message;
  int empty_iteration = -1;
};

/// True for quantities counted in the state width average.
inline bool counts_as_state(const ResidualSystem& sys, std::size_t j) {
  const QuantityInfo& q = sys.quantities()[j];
  if (q.kind == QuantityKind::i_re || q.kind == QuantityKind::i_im) return true;
  return (q.kind == QuantityKind::e || q.kind == QuantityKind::f) && q.index != sys.reference_bus();
}

inline WidthSample average_widths(const ResidualSystem& sys, const std::vector<Interval>& box) {
  double ws = 0.0, wm = 0.0;
  std::size_t ns = 0, nm = 0;
  for (std::size_t j = 0; j < box.size(); ++j) {
    if (counts_as_state(sys, j)) {
      ws += box[j].width();
      ++ns;
    } else if (sys.quantities()[j].kind == QuantityKind::measurement) {
      wm += box[j].width();
      ++nm;
    }
  }
  return {ns ? ws / ns : 0.0, nm ? wm / nm : 0.0};
}

}  // namespace rdmise
