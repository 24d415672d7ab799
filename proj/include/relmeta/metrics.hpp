#pragma once

#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "relmeta/common.hpp"
#include "relmeta/sim.hpp"
#include "relmeta/structure.hpp"

namespace relmeta {

// Module labels are unsupervised, so accuracy is scored under the best
// injective mapping from module indices to relation labels. A mapping is a
// module→label table with -1 for modules that carry no label; an ordered
// pair counts as correct when its module maps to the pair's true label.

// counts[module][label] accumulated over all ordered pairs.
inline void accumulate_edge_confusion(const Structure& predicted, const RelationGraph& truth,
                                      std::vector<std::vector<long long>>& counts) {
  require(predicted.n == truth.n_entities, "edge confusion: size mismatch");
  const int n_modules = static_cast<int>(counts.size());
  require(n_modules >= 1 && !counts[0].empty(), "edge confusion: empty count table");
  const int n_labels = static_cast<int>(counts[0].size());
  for (int i = 0; i < predicted.n; ++i)
    for (int j = 0; j < predicted.n; ++j) {
      if (i == j) continue;
      const int m = predicted.edge(i, j);
      const int l = truth.label(i, j);
      require(m >= 0 && m < n_modules && l >= 0 && l < n_labels,
              "edge confusion: index out of range");
      ++counts[m][l];
    }
}

namespace detail {

inline void best_mapping_search(const std::vector<std::vector<long long>>& counts,
                                bool modules_into_labels, int depth, long long matches,
                                std::vector<int>& used, std::vector<int>& current,
                                long long& best, std::vector<int>& best_map) {
  const int small = modules_into_labels ? static_cast<int>(counts.size())
                                        : static_cast<int>(counts[0].size());
  const int large = modules_into_labels ? static_cast<int>(counts[0].size())
                                        : static_cast<int>(counts.size());
  if (depth == small) {
    if (matches > best) {
      best = matches;
      best_map = current;
    }
    return;
  }
  for (int pick = 0; pick < large; ++pick) {
    if (used[pick]) continue;
    used[pick] = 1;
    current[depth] = pick;
    const long long gain =
        modules_into_labels ? counts[depth][pick] : counts[pick][depth];
    best_mapping_search(counts, modules_into_labels, depth + 1, matches + gain, used, current,
                        best, best_map);
    used[pick] = 0;
  }
}

}  // namespace detail

struct EdgeAccuracyResult {
  double accuracy = 0.0;
  std::vector<int> module_to_label;  // -1 for unmapped modules
};

// Exhaustive search over injective mappings between the smaller and larger
// of (modules, labels); both counts are tiny here so factorial cost is fine.
inline EdgeAccuracyResult best_label_mapping(const std::vector<std::vector<long long>>& counts) {
  const int n_modules = static_cast<int>(counts.size());
  require(n_modules >= 1 && !counts[0].empty(), "best_label_mapping: empty count table");
  const int n_labels = static_cast<int>(counts[0].size());
  const bool modules_into_labels = n_modules <= n_labels;
  const int small = modules_into_labels ? n_modules : n_labels;
  const int large = modules_into_labels ? n_labels : n_modules;

  std::vector<int> used(large, 0), current(small, -1), best_map;
  long long best = -1;
  detail::best_mapping_search(counts, modules_into_labels, 0, 0, used, current, best, best_map);

  EdgeAccuracyResult res;
  res.module_to_label.assign(n_modules, -1);
  if (modules_into_labels) {
    for (int m = 0; m < n_modules; ++m) res.module_to_label[m] = best_map[m];
  } else {
    for (int l = 0; l < n_labels; ++l) res.module_to_label[best_map[l]] = l;
  }
  long long total = 0;
  for (const auto& row : counts)
    for (long long c : row) total += c;
  res.accuracy = total > 0 ? static_cast<double>(best) / static_cast<double>(total) : 0.0;
  return res;
}

// Accuracy of one prediction under its own best mapping. Warns when the
// module and label counts differ, since only an injection is possible then.
inline double edge_accuracy(const Structure& predicted, const RelationGraph& truth,
                            int n_modules, int n_labels = 2) {
  require(n_modules >= 1 && n_labels >= 1, "edge_accuracy: bad sizes");
  if (n_modules != n_labels)
    std::fprintf(stderr,
                 "edge_accuracy: %d modules vs %d labels, scoring over injections\n",
                 n_modules, n_labels);
  std::vector<std::vector<long long>> counts(n_modules, std::vector<long long>(n_labels, 0));
  accumulate_edge_confusion(predicted, truth, counts);
  return best_label_mapping(counts).accuracy;
}

// Accuracy under a fixed mapping, e.g. one pooled over a whole task set so
// per-task rows share label semantics.
inline double edge_accuracy_under_mapping(const Structure& predicted,
                                          const RelationGraph& truth,
                                          std::span<const int> module_to_label) {
  require(predicted.n == truth.n_entities, "edge_accuracy_under_mapping: size mismatch");
  long long correct = 0, total = 0;
  for (int i = 0; i < predicted.n; ++i)
    for (int j = 0; j < predicted.n; ++j) {
      if (i == j) continue;
      const int m = predicted.edge(i, j);
      require(m >= 0 && m < static_cast<int>(module_to_label.size()),
              "edge_accuracy_under_mapping: module out of range");
      ++total;
      if (module_to_label[m] == truth.label(i, j)) ++correct;
    }
  return static_cast<double>(correct) / static_cast<double>(total);
}

// MSE over all state components at step k; index 0 of both trajectories is
// the shared anchor (the last observed state).
inline double kstep_mse(const Trajectory& predicted, const Trajectory& truth, int k) {
  require(predicted.n == truth.n, "kstep_mse: entity count mismatch");
  require(k >= 1, "kstep_mse: k must be positive");
  require(predicted.length() >= k + 1 && truth.length() >= k + 1,
          "kstep_mse: trajectories shorter than k steps");
  double sse = 0.0;
  for (int i = 0; i < predicted.n; ++i) {
    const double* p = predicted.state(k, i);
    const double* t = truth.state(k, i);
    for (int c = 0; c < kStateDim; ++c) {
      const double d = p[c] - t[c];
      sse += d * d;
    }
  }
  return sse / (static_cast<double>(predicted.n) * kStateDim);
}

// The Static baseline: every predicted step repeats the anchor state.
inline Trajectory static_baseline(const Trajectory& observed, int anchor_t, int horizon) {
  require(anchor_t >= 0 && anchor_t < observed.length(), "static_baseline: bad anchor");
  require(horizon >= 1, "static_baseline: bad horizon");
  Trajectory out;
  out.n = observed.n;
  out.dt = observed.dt;
  const std::size_t row = static_cast<std::size_t>(observed.n) * kStateDim;
  out.states.resize(row * (horizon + 1));
  for (int t = 0; t <= horizon; ++t)
    std::copy(observed.states.begin() + anchor_t * row,
              observed.states.begin() + (anchor_t + 1) * row, out.states.begin() + t * row);
  return out;
}

// One evaluated task: prediction errors, structure accuracy, search effort.
struct MetricsRow {
  int task = -1;  // -1 marks the aggregate row
  double mse_k1 = 0.0;
  double mse_k10 = 0.0;
  double edge_acc = 0.0;
  double proposals = 0.0;
  double wall_s = 0.0;
};

inline MetricsRow aggregate_rows(const std::vector<MetricsRow>& rows) {
  require(!rows.empty(), "aggregate_rows: no rows");
  MetricsRow agg;
  for (const MetricsRow& r : rows) {
    agg.mse_k1 += r.mse_k1;
    agg.mse_k10 += r.mse_k10;
    agg.edge_acc += r.edge_acc;
    agg.proposals += r.proposals;
    agg.wall_s += r.wall_s;
  }
  const double n = static_cast<double>(rows.size());
  agg.mse_k1 /= n;
  agg.mse_k10 /= n;
  agg.edge_acc /= n;
  agg.proposals /= n;
  agg.wall_s /= n;
  return agg;
}

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsRow aggregate;
};

inline MetricsReport make_metrics_report(std::vector<MetricsRow> rows) {
  MetricsReport report;
  report.aggregate = aggregate_rows(rows);
  report.rows = std::move(rows);
  return report;
}

// Fixed columns: task,mse_k1,mse_k10,edge_accuracy,proposals_used; the last
// row aggregates with task id "mean". %.17g keeps doubles exact. Wall time
// varies between runs, so it lives in the timing sidecar and the main table
// stays bit-identical for equal seeds.
inline std::string metrics_csv(const MetricsReport& report) {
  std::string out = "task,mse_k1,mse_k10,edge_accuracy,proposals_used\n";
  char line[256];
  for (const MetricsRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g\n", r.task, r.mse_k1,
                  r.mse_k10, r.edge_acc, r.proposals);
    out += line;
  }
  const MetricsRow& a = report.aggregate;
  std::snprintf(line, sizeof line, "mean,%.17g,%.17g,%.17g,%.17g\n", a.mse_k1, a.mse_k10,
                a.edge_acc, a.proposals);
  out += line;
  return out;
}

inline std::string timing_csv(const MetricsReport& report) {
  std::string out = "task,wall_seconds\n";
  char line[96];
  for (const MetricsRow& r : report.rows) {
    std::snprintf(line, sizeof line, "%d,%.17g\n", r.task, r.wall_s);
    out += line;
  }
  std::snprintf(line, sizeof line, "mean,%.17g\n", report.aggregate.wall_s);
  out += line;
  return out;
}

}  // namespace relmeta
