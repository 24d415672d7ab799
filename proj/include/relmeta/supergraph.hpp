#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "relmeta/gnn.hpp"
#include "relmeta/sim.hpp"

namespace relmeta {

// Transition start indices. A start t means: roll the model from observed
// state t and score predictions against observed states t+1 .. t+h.
inline std::vector<int> all_starts(int T, int h = 1) {
  require(T >= 2 && h >= 1 && h <= T - 1, "all_starts: horizon does not fit");
  std::vector<int> starts;
  for (int t = 0; t + h <= T - 1; ++t) starts.push_back(t);
  return starts;
}

// Interleaved split of the observed transitions: cycling blocks of five,
// three for the structure search and two held out for the weight updates.
inline std::vector<int> train_starts(int train_horizon, int h = 1) {
  std::vector<int> starts;
  for (int t = 0; t + h <= train_horizon - 1; ++t)
    if (t % 5 < 3) starts.push_back(t);
  return starts;
}

inline std::vector<int> test_starts(int train_horizon, int h = 1) {
  std::vector<int> starts;
  for (int t = 0; t + h <= train_horizon - 1; ++t)
    if (t % 5 >= 3) starts.push_back(t);
  return starts;
}

struct PooledLoss {
  double loss = 0.0;              // mean of the per-task losses
  std::vector<double> per_task;   // mean squared error per task
};

// Teacher-forced transition loss over a batch of tasks, executed as chunked
// super-graphs. Each chunk packs (tasks × starts) instances into one graph;
// gradients, when requested, accumulate in task-index order.
inline PooledLoss pooled_transition_loss(const ModuleLibrary& lib,
                                         std::span<const Trajectory* const> trajectories,
                                         std::span<const Structure* const> structures,
                                         std::span<const int> starts, int h = 1,
                                         LibraryGrads* grads = nullptr, int chunk_tasks = 64) {
  const int n_tasks = static_cast<int>(trajectories.size());
  require(n_tasks >= 1, "pooled_transition_loss: empty batch");
  require(structures.size() == trajectories.size(),
          "pooled_transition_loss: structures/trajectories size mismatch");
  require(!starts.empty(), "pooled_transition_loss: no transition starts");
  require(h >= 1, "pooled_transition_loss: horizon must be >= 1");
  require(chunk_tasks >= 1, "pooled_transition_loss: chunk_tasks must be >= 1");
  const int sd = lib.state_dim();
  const int n = trajectories.front()->n;
  const int T = trajectories.front()->length();
  for (const Trajectory* traj : trajectories)
    require(traj->n == n && traj->length() == T,
            "pooled_transition_loss: heterogeneous trajectories");
  for (int s : starts)
    require(s >= 0 && s + h <= T - 1, "pooled_transition_loss: start out of range");

  const int n_starts = static_cast<int>(starts.size());
  const std::size_t row = static_cast<std::size_t>(n) * sd;
  // d(pooled)/d(one predicted component); also the per-component weight of
  // the per-task mean
  const double per_task_denom = static_cast<double>(n_starts) * h * n * sd;

  PooledLoss result;
  result.per_task.assign(n_tasks, 0.0);

  for (int c0 = 0; c0 < n_tasks; c0 += chunk_tasks) {
    const int c1 = std::min(n_tasks, c0 + chunk_tasks);
    const int chunk = c1 - c0;
    const int R = chunk * n_starts;

    std::vector<const Structure*> inst_structs;
    inst_structs.reserve(R);
    for (int k = c0; k < c1; ++k)
      for (int s = 0; s < n_starts; ++s) inst_structs.push_back(structures[k]);
    SuperGraph sg = build_supergraph(std::span<const Structure* const>(inst_structs), lib);

    std::vector<double> states(R * row);
    for (int k = c0; k < c1; ++k)
      for (int s = 0; s < n_starts; ++s) {
        const double* src = trajectories[k]->state(starts[s], 0);
        std::copy(src, src + row, states.data() + (static_cast<std::size_t>(k - c0) * n_starts + s) * row);
      }

    std::vector<SuperStepTape> tapes(grads ? h : 0);
    std::vector<std::vector<double>> diffs(h);  // per step: pred - target
    std::vector<double> next(R * row);
    for (int step = 1; step <= h; ++step) {
      super_step(lib, sg, states.data(), next.data(), grads ? &tapes[step - 1] : nullptr);
      std::vector<double>& diff = diffs[step - 1];
      diff.resize(R * row);
      for (int k = c0; k < c1; ++k) {
        double sse = 0.0;
        for (int s = 0; s < n_starts; ++s) {
          const double* target = trajectories[k]->state(starts[s] + step, 0);
          std::size_t base = (static_cast<std::size_t>(k - c0) * n_starts + s) * row;
          for (std::size_t i = 0; i < row; ++i) {
            double d = next[base + i] - target[i];
            diff[base + i] = d;
            sse += d * d;
          }
        }
        result.per_task[k] += sse;
      }
      states.swap(next);
    }

    if (grads) {
      const double w = 2.0 / (per_task_denom * n_tasks);
      std::vector<double> d_state(R * row), d_prev(R * row);
      for (std::size_t i = 0; i < d_state.size(); ++i) d_state[i] = w * diffs[h - 1][i];
      for (int step = h; step >= 1; --step) {
        super_step_backward(lib, sg, tapes[step - 1], d_state.data(), *grads, d_prev.data());
        if (step > 1)
          for (std::size_t i = 0; i < d_prev.size(); ++i) d_prev[i] += w * diffs[step - 2][i];
        d_state.swap(d_prev);
      }
    }
  }

  for (double& v : result.per_task) v /= per_task_denom;
  double sum = 0.0;
  for (double v : result.per_task) sum += v;
  result.loss = sum / n_tasks;
  return result;
}

// Spec-facing single-task loss: every observed transition, unordered-set
// semantics (the result is a mean, so accumulation order is irrelevant).
inline double transition_loss(const Structure& structure, const ModuleLibrary& lib,
                              const Trajectory& traj, int h = 1) {
  const Trajectory* tp = &traj;
  const Structure* sp = &structure;
  std::vector<int> starts = all_starts(traj.length(), h);
  return pooled_transition_loss(lib, std::span<const Trajectory* const>(&tp, 1),
                                std::span<const Structure* const>(&sp, 1), starts, h)
      .loss;
}

inline double transition_loss_grad(const Structure& structure, const ModuleLibrary& lib,
                                   const Trajectory& traj, int h, LibraryGrads& grads) {
  const Trajectory* tp = &traj;
  const Structure* sp = &structure;
  std::vector<int> starts = all_starts(traj.length(), h);
  return pooled_transition_loss(lib, std::span<const Trajectory* const>(&tp, 1),
                                std::span<const Structure* const>(&sp, 1), starts, h, &grads)
      .loss;
}

// Free-running rollout for a batch of instances; returns
// (horizon+1) × rows × n × state_dim, slice 0 being the inits.
inline std::vector<double> batched_rollout(const ModuleLibrary& lib,
                                           std::span<const Structure* const> structures,
                                           std::span<const double> inits, int horizon) {
  require(horizon >= 1, "batched_rollout: horizon must be >= 1");
  SuperGraph sg = build_supergraph(structures, lib);
  const std::size_t row = static_cast<std::size_t>(sg.rows) * sg.n * lib.state_dim();
  require(inits.size() == row, "batched_rollout: init size mismatch");
  std::vector<double> out((horizon + 1) * row);
  std::copy(inits.begin(), inits.end(), out.begin());
  for (int t = 0; t < horizon; ++t)
    super_step(lib, sg, out.data() + t * row, out.data() + (t + 1) * row);
  return out;
}

// Squared error of one node's one-step predictions over the given starts.
// Only the node's incoming edges matter, which is what makes single-edge
// and single-node proposals cheap to score: a proposal touching node v
// changes the task's training loss by exactly the change in this value.
inline double node_transition_sse(const ModuleLibrary& lib, const Structure& structure,
                                  const Trajectory& traj, int v, std::span<const int> starts) {
  const int sd = lib.state_dim();
  const int md = lib.msg_dim();
  const int n = structure.n;
  require(0 <= v && v < n, "node_transition_sse: node out of range");
  const int n_starts = static_cast<int>(starts.size());
  require(n_starts >= 1, "node_transition_sse: no starts");

  // incoming senders grouped by module, ascending sender order within each
  std::vector<double> agg(static_cast<std::size_t>(n_starts) * md, 0.0);
  std::vector<double> x, msg;
  for (int m = 0; m < lib.n_edge_modules(); ++m) {
    int count = 0;
    for (int i = 0; i < n; ++i)
      if (i != v && structure.edge(i, v) == m) ++count;
    if (count == 0) continue;
    x.resize(static_cast<std::size_t>(count) * n_starts * 2 * sd);
    std::size_t k = 0;
    for (int i = 0; i < n; ++i) {
      if (i == v || structure.edge(i, v) != m) continue;
      for (int s = 0; s < n_starts; ++s, ++k) {
        const double* si = traj.state(starts[s], i);
        const double* sv = traj.state(starts[s], v);
        std::copy(si, si + sd, x.data() + k * 2 * sd);
        std::copy(sv, sv + sd, x.data() + k * 2 * sd + sd);
      }
    }
    msg.resize(static_cast<std::size_t>(count) * n_starts * md);
    mlp_forward_batch(lib.edge_spec, lib.edge_params[m], x.data(),
                      static_cast<int>(count * n_starts), msg.data());
    for (std::size_t e = 0; e < static_cast<std::size_t>(count); ++e)
      for (int s = 0; s < n_starts; ++s)
        for (int c = 0; c < md; ++c)
          agg[static_cast<std::size_t>(s) * md + c] += msg[(e * n_starts + s) * md + c];
  }

  std::vector<double> xn(static_cast<std::size_t>(n_starts) * (sd + md));
  for (int s = 0; s < n_starts; ++s) {
    const double* sv = traj.state(starts[s], v);
    std::copy(sv, sv + sd, xn.data() + static_cast<std::size_t>(s) * (sd + md));
    std::copy(agg.data() + static_cast<std::size_t>(s) * md,
              agg.data() + static_cast<std::size_t>(s) * md + md,
              xn.data() + static_cast<std::size_t>(s) * (sd + md) + sd);
  }
  std::vector<double> delta(static_cast<std::size_t>(n_starts) * sd);
  mlp_forward_batch(lib.node_spec, lib.node_params[structure.node_assign[v]], xn.data(),
                    n_starts, delta.data());

  double sse = 0.0;
  for (int s = 0; s < n_starts; ++s) {
    const double* sv = traj.state(starts[s], v);
    const double* target = traj.state(starts[s] + 1, v);
    for (int c = 0; c < sd; ++c) {
      double pred = sv[c] + delta[static_cast<std::size_t>(s) * sd + c];
      double d = pred - target[c];
      sse += d * d;
    }
  }
  return sse;
}

// Task training loss assembled from per-node terms; the incremental SA
// evaluation keeps exactly these terms cached.
inline double task_loss_from_node_sse(std::span<const double> node_sse, int n_starts, int n,
                                      int state_dim) {
  double sum = 0.0;
  for (double v : node_sse) sum += v;
  return sum / (static_cast<double>(n_starts) * n * state_dim);
}

}  // namespace relmeta
