#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace rdmise::detail {

/// Sparse vector as (index, value) pairs with unique indices.
using SparseVec = std::vector<std::pair<std::size_t, double>>;

/// LU factors of a square sparse basis plus product-form column updates.
///
/// Basis columns are addressed by position k, matrix rows by row index i.
/// ftran solves B w = a (a row-indexed, w position-indexed); btran solves
/// y^T B = z^T (z position-indexed, y row-indexed).
class BasisFactor {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  /// Positions and rows left unpivoted by a singular basis, paired up.
  struct Deficiency {
    std::vector<std::size_t> positions;
    std::vector<std::size_t> rows;
    bool empty() const { return positions.empty(); }
  };

  /// Markowitz elimination with threshold partial pivoting.
  Deficiency factorize(std::size_t m, const std::vector<const SparseVec*>& cols) {
    m_ = m;
    lower_.clear();
    lower_entries_.clear();
    upper_.clear();
    upper_entries_.clear();
    etas_.clear();
    eta_entries_.clear();

    Workspace& ws = ws_;
    ws.reset(m);
    auto& rows = ws.rows;
    auto& col_rows = ws.col_rows;
    auto& row_count = ws.row_count;
    auto& col_count = ws.col_count;
    auto& row_active = ws.row_active;
    auto& col_active = ws.col_active;
    auto& head = ws.head;
    auto& next = ws.next;
    auto& prev = ws.prev;
    auto& slot = ws.slot;
    auto& row_stack = ws.row_stack;

    for (std::size_t k = 0; k < m; ++k) {
      for (const auto& [i, v] : *cols[k]) {
        if (v == 0.0) continue;
        rows[i].push_back({k, v});
        col_rows[k].push_back(i);
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      row_count[i] = rows[i].size();
      if (row_count[i] == 1) row_stack.push_back(i);
    }
    for (std::size_t k = 0; k < m; ++k) col_count[k] = col_rows[k].size();

    // Active columns bucketed by count in doubly linked lists.
    auto link = [&](std::size_t k) {
      const std::size_t c = std::min(col_count[k], m);
      prev[k] = npos;
      next[k] = head[c];
      if (head[c] != npos) prev[head[c]] = k;
      head[c] = k;
    };
    auto unlink = [&](std::size_t k) {
      const std::size_t c = std::min(col_count[k], m);
      if (prev[k] != npos) next[prev[k]] = next[k];
      else head[c] = next[k];
      if (next[k] != npos) prev[next[k]] = prev[k];
    };
    auto recount = [&](std::size_t k, std::size_t count) {
      unlink(k);
      col_count[k] = count;
      link(k);
    };
    for (std::size_t k = 0; k < m; ++k) link(k);

    auto value_at = [&](std::size_t i, std::size_t k) {
      for (const auto& [c, v] : rows[i])
        if (c == k) return v;
      return 0.0;
    };
    auto col_max = [&](std::size_t k) {
      double mx = 0.0;
      for (std::size_t i : col_rows[k])
        if (row_active[i]) mx = std::max(mx, std::abs(value_at(i, k)));
      return mx;
    };

    for (std::size_t step = 0; step < m; ++step) {
      std::size_t r = npos, c = npos;
      double piv = 0.0;

      for (std::size_t k = head[1]; k != npos && r == npos; k = next[k]) {
        for (std::size_t i : col_rows[k]) {
          if (!row_active[i]) continue;
          const double v = value_at(i, k);
          if (std::abs(v) > kTiny) {
            r = i;
            c = k;
            piv = v;
          }
          break;
        }
      }
      while (r == npos && !row_stack.empty()) {
        const std::size_t i = row_stack.back();
        row_stack.pop_back();
        if (!row_active[i] || row_count[i] != 1) continue;
        const auto [k, v] = rows[i].front();
        if (std::abs(v) > kTiny && std::abs(v) >= kThreshold * col_max(k)) {
          r = i;
          c = k;
          piv = v;
        }
      }
      if (r == npos) {
        // General search over the sparsest few columns.
        std::size_t best_cost = npos;
        std::size_t seen = 0;
        for (std::size_t count = 1; count <= m && seen < kCandidates && r == npos; ++count) {
          for (std::size_t k = head[count]; k != npos && seen < kCandidates; k = next[k], ++seen) {
            const double mx = col_max(k);
            for (std::size_t i : col_rows[k]) {
              if (!row_active[i]) continue;
              const double v = value_at(i, k);
              if (std::abs(v) <= kTiny || std::abs(v) < kThreshold * mx) continue;
              const std::size_t cost = (row_count[i] - 1) * (col_count[k] - 1);
              if (cost < best_cost || (cost == best_cost && std::abs(v) > std::abs(piv))) {
                best_cost = cost;
                r = i;
                c = k;
                piv = v;
              }
            }
          }
        }
      }
      if (r == npos) break;

      row_active[r] = 0;
      col_active[c] = 0;
      unlink(c);
      const std::size_t ubegin = upper_entries_.size();
      for (const auto& [k, v] : rows[r]) {
        if (k == c) continue;
        upper_entries_.push_back({k, v});
        recount(k, col_count[k] - 1);
      }
      upper_.push_back({r, c, piv, ubegin, upper_entries_.size()});

      const std::size_t lbegin = lower_entries_.size();
      for (std::size_t i : col_rows[c]) {
        if (!row_active[i]) continue;
        SparseVec& row = rows[i];
        double vic = 0.0;
        for (std::size_t t = 0; t < row.size(); ++t) {
          if (row[t].first == c) {
            vic = row[t].second;
            row[t] = row.back();
            row.pop_back();
            --row_count[i];
            break;
          }
        }
        if (vic != 0.0) {
          const double mult = vic / piv;
          lower_entries_.push_back({i, mult});
          for (std::size_t t = 0; t < row.size(); ++t) slot[row[t].first] = t;
          for (std::size_t t = ubegin; t < upper_entries_.size(); ++t) {
            const auto [k, v] = upper_entries_[t];
            if (slot[k] != npos) {
              row[slot[k]].second -= mult * v;
            } else {
              slot[k] = row.size();
              row.push_back({k, -mult * v});
              col_rows[k].push_back(i);
              recount(k, col_count[k] + 1);
              ++row_count[i];
            }
          }
          for (const auto& e : row) slot[e.first] = npos;
        }
        if (row_count[i] == 1) row_stack.push_back(i);
      }
      if (lower_entries_.size() > lbegin) lower_.push_back({r, 0, 1.0, lbegin, lower_entries_.size()});
    }

    Deficiency def;
    for (std::size_t k = 0; k < m; ++k)
      if (col_active[k]) def.positions.push_back(k);
    for (std::size_t i = 0; i < m; ++i)
      if (row_active[i]) def.rows.push_back(i);
    return def;
  }

  /// a is consumed; w receives the position-indexed solution.
  void ftran(std::vector<double>& a, std::vector<double>& w) const {
    const auto* le = lower_entries_.data();
    for (const Op& l : lower_) {
      const double v = a[l.index];
      if (v == 0.0) continue;
      for (std::size_t t = l.begin; t < l.end; ++t) a[le[t].first] -= le[t].second * v;
    }
    w.assign(m_, 0.0);
    const auto* ue = upper_entries_.data();
    for (auto it = upper_.rbegin(); it != upper_.rend(); ++it) {
      double s = a[it->index];
      for (std::size_t t = it->begin; t < it->end; ++t) s -= ue[t].second * w[ue[t].first];
      w[it->pos] = s / it->diag;
    }
    const auto* ee = eta_entries_.data();
    for (const Op& e : etas_) {
      const double t = w[e.pos] / e.diag;
      w[e.pos] = t;
      if (t == 0.0) continue;
      for (std::size_t q = e.begin; q < e.end; ++q) w[ee[q].first] -= ee[q].second * t;
    }
  }

  /// z is consumed; y receives the row-indexed solution.
  void btran(std::vector<double>& z, std::vector<double>& y) const {
    const auto* ee = eta_entries_.data();
    for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
      double s = z[it->pos];
      for (std::size_t q = it->begin; q < it->end; ++q) s -= ee[q].second * z[ee[q].first];
      z[it->pos] = s / it->diag;
    }
    y.assign(m_, 0.0);
    const auto* ue = upper_entries_.data();
    for (const Op& u : upper_) {
      const double v = z[u.pos] / u.diag;
      y[u.index] = v;
      if (v == 0.0) continue;
      for (std::size_t t = u.begin; t < u.end; ++t) z[ue[t].first] -= ue[t].second * v;
    }
    const auto* le = lower_entries_.data();
    for (auto it = lower_.rbegin(); it != lower_.rend(); ++it) {
      double s = y[it->index];
      for (std::size_t t = it->begin; t < it->end; ++t) s -= le[t].second * y[le[t].first];
      y[it->index] = s;
    }
  }

  /// Column at position p replaced by one whose ftran is w.
  void update(std::size_t p, const std::vector<double>& w) {
    const std::size_t begin = eta_entries_.size();
    for (std::size_t k = 0; k < w.size(); ++k)
      if (k != p && w[k] != 0.0) eta_entries_.push_back({k, w[k]});
    etas_.push_back({p, p, w[p], begin, eta_entries_.size()});
  }

  std::size_t num_updates() const { return etas_.size(); }

 private:
  static constexpr double kTiny = 1e-11;
  static constexpr double kThreshold = 0.1;
  static constexpr std::size_t kCandidates = 4;

  // One elimination, back-substitution or update step. index is the pivot
  // row for L and U; pos the basis position for U and etas.
  struct Op {
    std::size_t index;
    std::size_t pos;
    double diag;
    std::size_t begin, end;
  };

  struct Workspace {
    std::vector<SparseVec> rows;
    std::vector<std::vector<std::size_t>> col_rows;
    std::vector<std::size_t> row_count, col_count, head, next, prev, slot, row_stack;
    std::vector<char> row_active, col_active;

    void reset(std::size_t m) {
      rows.resize(m);
      col_rows.resize(m);
      for (auto& r : rows) r.clear();
      for (auto& c : col_rows) c.clear();
      row_count.assign(m, 0);
      col_count.assign(m, 0);
      head.assign(m + 1, npos);
      next.assign(m, npos);
      prev.assign(m, npos);
      slot.assign(m, npos);
      row_stack.clear();
      row_active.assign(m, 1);
      col_active.assign(m, 1);
    }
  };

  std::size_t m_ = 0;
  std::vector<Op> lower_, upper_, etas_;
  SparseVec lower_entries_, upper_entries_, eta_entries_;
  Workspace ws_;
};

}  // namespace rdmise::detail
