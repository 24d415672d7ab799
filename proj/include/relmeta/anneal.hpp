#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "relmeta/adam.hpp"
#include "relmeta/common.hpp"
#include "relmeta/gnn.hpp"
#include "relmeta/proposal.hpp"
#include "relmeta/rng.hpp"
#include "relmeta/sim.hpp"
#include "relmeta/structure.hpp"
#include "relmeta/supergraph.hpp"

namespace relmeta {

// Metropolis rule. Draws from rng only when the proposal is strictly worse,
// so the stream advances the same way on every accept path. A non-finite
// proposed loss is rejected outright; a non-finite current loss accepts any
// finite proposal so a chain can escape a broken state.
inline bool sa_accept(double current, double proposed, double temperature, Rng& rng) {
  if (!std::isfinite(proposed)) {
    std::fprintf(stderr, "sa_accept: rejecting non-finite proposed loss\n");
    return false;
  }
  if (!std::isfinite(current)) return true;
  if (proposed <= current) return true;
  if (!(temperature > 0.0)) return false;
  return rng.uniform() < std::exp((current - proposed) / temperature);
}

// Search state over a task set: per-task structure, its train-split loss,
// and the per-node squared-error terms the loss is assembled from. The
// cached terms are what make single-receiver proposals cheap to score.
struct AnnealState {
  std::vector<Structure> structures;
  std::vector<std::vector<double>> node_sse;  // per task, per node
  std::vector<double> train_loss;             // per task
  std::vector<int> starts;                    // train-split transition starts
  double t0 = 0.0;
  double temperature = 0.0;
  double decay = 0.997;
  double floor_frac = 1e-3;
  std::uint64_t sweep = 0;  // completed SA sweeps; drives the cooling schedule
  std::uint64_t seed = 0;   // master seed for per-task proposal substreams

  double mean_train_loss() const {
    double sum = 0.0;
    for (double v : train_loss) sum += v;
    return sum / static_cast<double>(train_loss.size());
  }
};

// Recomputes every cached per-node term and train loss under the current
// library weights. Must run after any weight update before the next sweep.
inline void refresh_losses(AnnealState& st, const ModuleLibrary& lib, const TaskSet& tasks) {
  const int n_starts = static_cast<int>(st.starts.size());
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    const Trajectory& traj = tasks.tasks[t].trajectory;
    const int n = st.structures[t].n;
    st.node_sse[t].resize(n);
    for (int v = 0; v < n; ++v)
      st.node_sse[t][v] = node_transition_sse(lib, st.structures[t], traj, v, st.starts);
    st.train_loss[t] =
        task_loss_from_node_sse(st.node_sse[t], n_starts, n, lib.state_dim());
  }
}

// t0 = 0 starts the schedule at the initial mean train loss.
inline AnnealState init_anneal_state(const ModuleLibrary& lib, const TaskSet& tasks,
                                     std::vector<Structure> structures, std::uint64_t seed,
                                     double t0 = 0.0, double decay = 0.997,
                                     double floor_frac = 1e-3) {
  require(!tasks.tasks.empty(), "init_anneal_state: empty task set");
  require(structures.size() == tasks.tasks.size(),
          "init_anneal_state: one structure per task required");
  require(decay > 0.0 && decay <= 1.0, "init_anneal_state: decay outside (0,1]");
  require(floor_frac > 0.0 && floor_frac <= 1.0, "init_anneal_state: floor outside (0,1]");
  require(t0 >= 0.0, "init_anneal_state: negative t0");
  const int th = tasks.tasks.front().train_horizon;
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    require(tasks.tasks[t].train_horizon == th,
            "init_anneal_state: mixed train horizons");
    require(structures[t].n == tasks.tasks[t].trajectory.n,
            "init_anneal_state: structure size does not match task");
    structures[t].validate(lib.n_edge_modules(), lib.n_node_modules());
  }

  AnnealState st;
  st.structures = std::move(structures);
  st.node_sse.resize(tasks.tasks.size());
  st.train_loss.resize(tasks.tasks.size());
  st.starts = train_starts(th);
  st.decay = decay;
  st.floor_frac = floor_frac;
  st.seed = seed;
  refresh_losses(st, lib, tasks);
  st.t0 = t0 > 0.0 ? t0 : st.mean_train_loss();
  st.temperature = st.t0;
  return st;
}

namespace detail {

// Nodes whose incoming edge set or node module differs between a and b.
// Only these nodes' one-step predictions can change.
inline void changed_receivers(const Structure& a, const Structure& b, std::vector<int>& out) {
  require(a.n == b.n, "changed_receivers: size mismatch");
  out.clear();
  for (int j = 0; j < a.n; ++j) {
    bool diff = a.node_assign[j] != b.node_assign[j];
    for (int i = 0; i < a.n && !diff; ++i)
      if (i != j && a.edge(i, j) != b.edge(i, j)) diff = true;
    if (diff) out.push_back(j);
  }
}

// Loss of a proposal, recomputing only the receivers it touches. scratch
// holds the updated per-node terms on return.
inline double proposed_task_loss(const ModuleLibrary& lib, const Structure& prop,
                                 const Trajectory& traj, std::span<const int> starts,
                                 const std::vector<double>& cur_sse,
                                 const std::vector<int>& changed,
                                 std::vector<double>& scratch) {
  scratch = cur_sse;
  for (int v : changed) scratch[v] = node_transition_sse(lib, prop, traj, v, starts);
  return task_loss_from_node_sse(scratch, static_cast<int>(starts.size()), prop.n,
                                 lib.state_dim());
}

}  // namespace detail

// A proposer maps (task index, current structure, task-local rng) to a
// candidate structure.
using Proposer = std::function<Structure(int, const Structure&, Rng&)>;

inline Proposer make_random_proposer(int n_edge_modules) {
  return [n_edge_modules](int, const Structure& cur, Rng& rng) {
    return random_proposal(cur, n_edge_modules, rng);
  };
}

// Blocked Gibbs from per-task distributions, mixed with uniform exploration
// at random_rate (0 = pure learned, 1 = pure random).
inline Proposer make_learned_proposer(std::vector<EdgeDistribution> dists, double random_rate,
                                      int n_edge_modules) {
  return [d = std::move(dists), random_rate, n_edge_modules](int task, const Structure& cur,
                                                             Rng& rng) {
    return mixed_proposer(cur, d.at(static_cast<std::size_t>(task)), random_rate,
                          n_edge_modules, rng);
  };
}

struct SaEpochStats {
  int proposals = 0;
  int accepted = 0;
  int nonfinite_rejects = 0;
  int task_errors = 0;

  double acceptance_rate() const {
    return proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0;
  }
};

// One proposal per task against the train split, then one cooling step.
// Each task draws from its own substream keyed on (seed, sweep, task), so
// results do not depend on evaluation order. Evaluation failures are counted
// per task and never abort the sweep. A non-empty batch restricts the sweep
// to those task indices; the state still covers the full set.
inline SaEpochStats sa_epoch(AnnealState& st, const ModuleLibrary& lib, const TaskSet& tasks,
                             const Proposer& propose, std::span<const int> batch = {}) {
  require(st.structures.size() == tasks.tasks.size(), "sa_epoch: state/task size mismatch");
  SaEpochStats stats;
  std::vector<int> changed;
  std::vector<double> scratch;
  std::vector<int> all;
  if (batch.empty()) {
    all.resize(tasks.tasks.size());
    std::iota(all.begin(), all.end(), 0);
    batch = all;
  }
  for (const int ti : batch) {
    require(ti >= 0 && ti < static_cast<int>(tasks.tasks.size()), "sa_epoch: batch index range");
    const auto t = static_cast<std::size_t>(ti);
    Rng rng = Rng::substream(st.seed, {stream::sa, st.sweep, static_cast<std::uint64_t>(t)});
    ++stats.proposals;
    try {
      Structure prop = propose(static_cast<int>(t), st.structures[t], rng);
      prop.validate(lib.n_edge_modules(), lib.n_node_modules());
      detail::changed_receivers(st.structures[t], prop, changed);
      if (changed.empty()) {
        ++stats.accepted;
        continue;
      }
      const double prop_loss = detail::proposed_task_loss(
          lib, prop, tasks.tasks[t].trajectory, st.starts, st.node_sse[t], changed, scratch);
      if (!std::isfinite(prop_loss)) ++stats.nonfinite_rejects;
      if (sa_accept(st.train_loss[t], prop_loss, st.temperature, rng)) {
        ++stats.accepted;
        st.structures[t] = std::move(prop);
        st.node_sse[t] = scratch;
        st.train_loss[t] = prop_loss;
      }
    } catch (const ModelDiverged&) {
      ++stats.task_errors;
    }
  }
  ++st.sweep;
  st.temperature = std::max(st.t0 * std::pow(st.decay, static_cast<double>(st.sweep)),
                            st.t0 * st.floor_frac);
  return stats;
}

struct LibraryAdam {
  std::vector<AdamState> edge;
  std::vector<AdamState> node;
};

inline LibraryAdam make_library_adam(const ModuleLibrary& lib, AdamConfig cfg = {}) {
  LibraryAdam a;
  a.edge.assign(lib.n_edge_modules(), AdamState(lib.edge_spec.param_count(), cfg));
  a.node.assign(lib.n_node_modules(), AdamState(lib.node_spec.param_count(), cfg));
  return a;
}

struct GdEpochResult {
  double test_loss = std::numeric_limits<double>::quiet_NaN();  // pooled, pre-step
  bool applied = false;
  std::string note;  // reason when the update was skipped
};

// One pooled Adam step per module set on the test-split transitions, under
// the current structures. Gradients pool across every task that uses a
// module; an unused module sees a zero gradient and keeps its parameters.
// Any non-finite gradient skips the whole update. With refresh set, the
// cached train losses are recomputed after an applied step. A non-empty
// batch pools over those task indices only; the refresh still covers all
// tasks because a weight step stales every cached loss.
inline GdEpochResult gd_epoch(AnnealState& st, ModuleLibrary& lib, const TaskSet& tasks,
                              LibraryAdam& adam, bool refresh = true, int chunk_tasks = 64,
                              std::span<const int> batch = {}) {
  require(st.structures.size() == tasks.tasks.size(), "gd_epoch: state/task size mismatch");
  require(adam.edge.size() == static_cast<std::size_t>(lib.n_edge_modules()) &&
              adam.node.size() == static_cast<std::size_t>(lib.n_node_modules()),
          "gd_epoch: optimizer does not match the library");
  GdEpochResult res;
  const std::size_t width = batch.empty() ? tasks.tasks.size() : batch.size();
  std::vector<const Trajectory*> trajs(width);
  std::vector<const Structure*> structs(width);
  for (std::size_t b = 0; b < width; ++b) {
    const int ti = batch.empty() ? static_cast<int>(b) : batch[b];
    require(ti >= 0 && ti < static_cast<int>(tasks.tasks.size()), "gd_epoch: batch index range");
    trajs[b] = &tasks.tasks[static_cast<std::size_t>(ti)].trajectory;
    structs[b] = &st.structures[static_cast<std::size_t>(ti)];
  }
  const std::vector<int> starts = test_starts(tasks.tasks.front().train_horizon);

  LibraryGrads grads = LibraryGrads::zeros_like(lib);
  try {
    res.test_loss = pooled_transition_loss(lib, trajs, structs, starts, 1, &grads,
                                           chunk_tasks)
                        .loss;
  } catch (const ModelDiverged& e) {
    res.note = e.what();
    return res;
  }
  for (const auto& block : grads.edge)
    for (double v : block)
      if (!std::isfinite(v)) {
        res.note = "gd_epoch: non-finite pooled gradient, update skipped";
        return res;
      }
  for (const auto& block : grads.node)
    for (double v : block)
      if (!std::isfinite(v)) {
        res.note = "gd_epoch: non-finite pooled gradient, update skipped";
        return res;
      }
  for (int m = 0; m < lib.n_edge_modules(); ++m)
    adam_step(adam.edge[m], lib.edge_params[m], grads.edge[m]);
  for (int g = 0; g < lib.n_node_modules(); ++g)
    adam_step(adam.node[g], lib.node_params[g], grads.node[g]);
  res.applied = true;
  if (refresh) refresh_losses(st, lib, tasks);
  return res;
}

enum class ProposalMode { Random, Learned, Mixed };

inline const char* proposal_mode_name(ProposalMode m) {
  switch (m) {
    case ProposalMode::Random: return "random";
    case ProposalMode::Learned: return "learned";
    case ProposalMode::Mixed: return "mixed";
  }
  throw ContractError("proposal_mode_name: bad mode");
}

inline ProposalMode proposal_mode_from_name(const std::string& name) {
  if (name == "random") return ProposalMode::Random;
  if (name == "learned") return ProposalMode::Learned;
  if (name == "mixed") return ProposalMode::Mixed;
  throw ConfigError("unknown proposal mode: " + name);
}

struct MetaTrainConfig {
  int n_edge_modules = 2;
  int n_node_modules = 1;
  int state_dim = 4;
  int msg_dim = 16;
  int embed_dim = 64;
  int epochs = 0;
  int sa_steps_per_epoch = 4;
  int gd_steps_per_epoch = 4;
  int batch_size = 64;  // task chunk width for the pooled passes
  double t0 = 0.0;      // 0 = start at the initial mean train loss
  double decay = 0.997;
  double temperature_floor = 1e-3;  // fraction of t0
  ProposalMode proposal = ProposalMode::Random;
  double mixed_random_rate = 0.1;
  bool fixed_structures = false;  // pin structures to ground truth, skip SA
  std::uint64_t seed = 0;
  AdamConfig library_adam;
  AdamConfig proposal_adam;

  void validate() const {
    require(n_edge_modules >= 2, "MetaTrainConfig: need at least two edge modules");
    require(n_node_modules >= 1, "MetaTrainConfig: need a node module");
    require(state_dim == kStateDim, "MetaTrainConfig: state_dim must match the observations");
    require(msg_dim >= 1 && embed_dim >= 1, "MetaTrainConfig: bad widths");
    require(epochs >= 0, "MetaTrainConfig: negative epochs");
    require(sa_steps_per_epoch >= 0 && gd_steps_per_epoch >= 0,
            "MetaTrainConfig: negative step counts");
    require(batch_size >= 1, "MetaTrainConfig: batch_size must be positive");
    require(t0 >= 0.0, "MetaTrainConfig: negative t0");
    require(decay > 0.0 && decay <= 1.0, "MetaTrainConfig: decay outside (0,1]");
    require(temperature_floor > 0.0 && temperature_floor <= 1.0,
            "MetaTrainConfig: temperature_floor outside (0,1]");
    require(mixed_random_rate >= 0.0 && mixed_random_rate <= 1.0,
            "MetaTrainConfig: mixed_random_rate outside [0,1]");
  }

  bool operator==(const MetaTrainConfig&) const = default;
};

struct TrainLogRow {
  int epoch = 0;
  double mean_train_loss = 0.0;
  double mean_test_loss = 0.0;
  double acceptance_rate = 0.0;
  double temperature = 0.0;
  ProposalMode proposal = ProposalMode::Random;

  bool operator==(const TrainLogRow&) const = default;
};

struct MetaTrainResult {
  ModuleLibrary library;
  ProposalParams proposal;
  std::vector<Structure> structures;  // final per-task structures
  std::vector<TrainLogRow> log;       // one row per epoch
};

// Alternates structure search and pooled weight updates: per epoch,
// sa_steps_per_epoch sweeps over the train split, then gd_steps_per_epoch
// Adam steps on the test split. In learned and mixed modes the proposal
// encoder is refit once per sweep on the sweep's resulting structures.
// Structures persist across epochs. Everything is a pure function of
// (tasks, config), so equal seeds give equal logs.
inline MetaTrainResult meta_train(const TaskSet& tasks, const MetaTrainConfig& cfg) {
  cfg.validate();
  require(!tasks.tasks.empty(), "meta_train: empty task set");

  MetaTrainResult out;
  out.library = make_library(cfg.n_edge_modules, cfg.n_node_modules, cfg.seed, cfg.state_dim,
                             cfg.msg_dim);
  const int th = tasks.tasks.front().train_horizon;
  out.proposal = make_proposal_params(th, cfg.n_edge_modules, cfg.seed, cfg.embed_dim);

  std::vector<Structure> structures;
  structures.reserve(tasks.tasks.size());
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    if (cfg.fixed_structures) {
      structures.push_back(structure_from_truth(tasks.tasks[t].truth));
    } else {
      Rng rng = Rng::substream(cfg.seed, {stream::structure_init, static_cast<std::uint64_t>(t)});
      structures.push_back(
          random_structure(tasks.tasks[t].trajectory.n, cfg.n_edge_modules, rng));
    }
  }
  if (cfg.epochs == 0) {
    out.structures = std::move(structures);
    return out;
  }

  AnnealState st = init_anneal_state(out.library, tasks, std::move(structures), cfg.seed,
                                     cfg.t0, cfg.decay, cfg.temperature_floor);
  LibraryAdam lib_adam = make_library_adam(out.library, cfg.library_adam);
  ProposalAdam prop_adam = make_proposal_adam(out.proposal, cfg.proposal_adam);

  const bool learned = cfg.proposal != ProposalMode::Random && !cfg.fixed_structures;
  const double rate = cfg.proposal == ProposalMode::Mixed ? cfg.mixed_random_rate : 0.0;
  std::vector<Trajectory> windows;
  std::vector<const Trajectory*> window_ptrs;
  if (learned) {
    windows.reserve(tasks.tasks.size());
    for (const Task& task : tasks.tasks)
      windows.push_back(trajectory_prefix(task.trajectory, task.train_horizon));
    window_ptrs.resize(windows.size());
    for (std::size_t t = 0; t < windows.size(); ++t) window_ptrs[t] = &windows[t];
  }
  std::vector<const Trajectory*> trajs(tasks.tasks.size());
  std::vector<const Structure*> structs(tasks.tasks.size());
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) trajs[t] = &tasks.tasks[t].trajectory;

  const int n_tasks = static_cast<int>(tasks.tasks.size());
  const bool subsample = cfg.batch_size < n_tasks;
  std::vector<int> batch, batch_pos;
  std::vector<const Trajectory*> batch_windows;
  std::vector<const Structure*> batch_structs;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (subsample) {
      std::vector<int> pool(static_cast<std::size_t>(n_tasks));
      std::iota(pool.begin(), pool.end(), 0);
      Rng brng = Rng::substream(cfg.seed,
                                {stream::batch_sel, static_cast<std::uint64_t>(epoch)});
      batch.assign(static_cast<std::size_t>(cfg.batch_size), 0);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const int pick = b + brng.uniform_int(n_tasks - b);
        std::swap(pool[static_cast<std::size_t>(b)], pool[static_cast<std::size_t>(pick)]);
        batch[static_cast<std::size_t>(b)] = pool[static_cast<std::size_t>(b)];
      }
      std::sort(batch.begin(), batch.end());
      if (learned) {
        batch_pos.assign(static_cast<std::size_t>(n_tasks), -1);
        batch_windows.resize(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
          batch_pos[static_cast<std::size_t>(batch[b])] = static_cast<int>(b);
          batch_windows[b] = window_ptrs[static_cast<std::size_t>(batch[b])];
        }
      }
    }
    const std::span<const int> epoch_batch = subsample ? std::span<const int>(batch)
                                                       : std::span<const int>();
    const std::vector<const Trajectory*>& enc_windows = subsample ? batch_windows : window_ptrs;

    int proposals = 0, accepted = 0;
    if (!cfg.fixed_structures) {
      for (int s = 0; s < cfg.sa_steps_per_epoch; ++s) {
        Proposer propose;
        if (!learned) {
          propose = make_random_proposer(cfg.n_edge_modules);
        } else if (!subsample) {
          propose = make_learned_proposer(encode_all(out.proposal, enc_windows), rate,
                                          cfg.n_edge_modules);
        } else {
          propose = [d = encode_all(out.proposal, enc_windows), &batch_pos, rate,
                     h = cfg.n_edge_modules](int task, const Structure& cur, Rng& rng) {
            const int b = batch_pos.at(static_cast<std::size_t>(task));
            require(b >= 0, "meta_train: proposal requested outside the batch");
            return mixed_proposer(cur, d[static_cast<std::size_t>(b)], rate, h, rng);
          };
        }
        SaEpochStats stats = sa_epoch(st, out.library, tasks, propose, epoch_batch);
        proposals += stats.proposals;
        accepted += stats.accepted;
        if (learned) {
          if (subsample) {
            batch_structs.resize(batch.size());
            for (std::size_t b = 0; b < batch.size(); ++b)
              batch_structs[b] = &st.structures[static_cast<std::size_t>(batch[b])];
          } else {
            batch_structs.resize(st.structures.size());
            for (std::size_t t = 0; t < st.structures.size(); ++t)
              batch_structs[t] = &st.structures[t];
          }
          try {
            train_proposal_step(out.proposal, prop_adam, enc_windows, batch_structs);
          } catch (const ModelDiverged&) {
            // skipped step; the encoder keeps its previous parameters
          }
        }
      }
    }

    double test_loss = std::numeric_limits<double>::quiet_NaN();
    bool stepped = false;
    for (int g = 0; g < cfg.gd_steps_per_epoch; ++g) {
      GdEpochResult res = gd_epoch(st, out.library, tasks, lib_adam, false, cfg.batch_size,
                                   epoch_batch);
      test_loss = res.test_loss;
      stepped = stepped || res.applied;
    }
    if (stepped) refresh_losses(st, out.library, tasks);
    if (cfg.gd_steps_per_epoch > 0 && !stepped && !std::isfinite(st.mean_train_loss()))
      throw ModelDiverged("meta_train: persistent non-finite losses across an epoch");
    if (cfg.gd_steps_per_epoch == 0) {
      for (std::size_t t = 0; t < st.structures.size(); ++t) structs[t] = &st.structures[t];
      const std::vector<int> starts = test_starts(th);
      test_loss = pooled_transition_loss(out.library, trajs, structs, starts, 1, nullptr,
                                         cfg.batch_size)
                      .loss;
    }

    out.log.push_back(TrainLogRow{epoch, st.mean_train_loss(), test_loss,
                                  proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0,
                                  st.temperature, cfg.proposal});
  }
  out.structures = std::move(st.structures);
  return out;
}

// Train-split loss of one structure on one task, assembled from the same
// per-node terms the search caches, so it reproduces reported losses bitwise.
inline double structure_search_loss(const ModuleLibrary& lib, const Structure& s,
                                    const Task& task) {
  const std::vector<int> starts = train_starts(task.train_horizon);
  std::vector<double> sse(s.n);
  for (int v = 0; v < s.n; ++v)
    sse[v] = node_transition_sse(lib, s, task.trajectory, v, starts);
  return task_loss_from_node_sse(sse, static_cast<int>(starts.size()), s.n, lib.state_dim());
}

struct MetaTestConfig {
  int budget = 2000;  // total proposals across restarts
  int restarts = 5;
  double decay = 0.997;
  double temperature_floor = 1e-3;
  ProposalMode proposal = ProposalMode::Random;
  double mixed_random_rate = 0.0;  // exploit the encoder at test time
  std::uint64_t seed = 0;

  void validate() const {
    require(budget >= 1, "MetaTestConfig: budget must be positive");
    require(restarts >= 1, "MetaTestConfig: restarts must be positive");
    require(decay > 0.0 && decay <= 1.0, "MetaTestConfig: decay outside (0,1]");
    require(temperature_floor > 0.0 && temperature_floor <= 1.0,
            "MetaTestConfig: temperature_floor outside (0,1]");
    require(mixed_random_rate >= 0.0 && mixed_random_rate <= 1.0,
            "MetaTestConfig: mixed_random_rate outside [0,1]");
  }
};

struct MetaTestResult {
  Structure structure;  // best across all restarts
  double train_loss = std::numeric_limits<double>::infinity();
  int proposals_used = 0;     // total proposals consumed
  int proposals_to_best = 0;  // count at the last improvement
  std::vector<double> best_curve;  // best-so-far loss after each proposal
  Trajectory rollout1;   // last observed state plus 1 predicted step
  Trajectory rollout10;  // last observed state plus 10 predicted steps
};

// Structure search on one held-out task with frozen weights: the budget is
// split evenly across random restarts, each reheated to its own initial
// loss and cooled per proposal. Ties keep the earlier candidate, so the
// best-so-far record is deterministic.
inline MetaTestResult meta_test(const Task& task, const ModuleLibrary& lib,
                                const MetaTestConfig& cfg,
                                const ProposalParams* proposal = nullptr) {
  cfg.validate();
  lib.validate();
  require(proposal != nullptr || cfg.proposal == ProposalMode::Random,
          "meta_test: learned proposals need encoder parameters");
  const int n = task.trajectory.n;
  const int H = lib.n_edge_modules();
  const std::vector<int> starts = train_starts(task.train_horizon);
  const int n_starts = static_cast<int>(starts.size());

  EdgeDistribution dist;
  if (cfg.proposal != ProposalMode::Random)
    dist = encode(*proposal, trajectory_prefix(task.trajectory, task.train_horizon));

  MetaTestResult res;
  double best_key = std::numeric_limits<double>::infinity();
  bool has_best = false;
  auto consider = [&](const Structure& s, double loss) {
    const double key = std::isfinite(loss) ? loss : std::numeric_limits<double>::infinity();
    if (!has_best || key < best_key) {
      has_best = true;
      best_key = key;
      res.structure = s;
      res.train_loss = loss;
      res.proposals_to_best = res.proposals_used;
    }
  };

  const int base = cfg.budget / cfg.restarts;
  const int extra = cfg.budget % cfg.restarts;
  std::vector<int> changed;
  std::vector<double> scratch;
  for (int r = 0; r < cfg.restarts; ++r) {
    const int quota = base + (r < extra ? 1 : 0);
    if (quota == 0) continue;
    Rng rng = Rng::substream(cfg.seed, {stream::meta_test, static_cast<std::uint64_t>(r)});
    Structure cur = random_structure(n, H, rng);
    std::vector<double> sse(n);
    for (int v = 0; v < n; ++v)
      sse[v] = node_transition_sse(lib, cur, task.trajectory, v, starts);
    double cur_loss = task_loss_from_node_sse(sse, n_starts, n, lib.state_dim());
    consider(cur, cur_loss);
    const double t0 = std::isfinite(cur_loss) ? cur_loss : 0.0;  // reheat per restart
    for (int k = 0; k < quota; ++k) {
      const double temperature =
          std::max(t0 * std::pow(cfg.decay, static_cast<double>(k)),
                   t0 * cfg.temperature_floor);
      Structure prop =
          cfg.proposal == ProposalMode::Random
              ? random_proposal(cur, H, rng)
              : mixed_proposer(cur, dist, cfg.mixed_random_rate, H, rng);
      detail::changed_receivers(cur, prop, changed);
      ++res.proposals_used;
      if (!changed.empty()) {
        const double prop_loss = detail::proposed_task_loss(lib, prop, task.trajectory,
                                                            starts, sse, changed, scratch);
        if (sa_accept(cur_loss, prop_loss, temperature, rng)) {
          cur = std::move(prop);
          sse = scratch;
          cur_loss = prop_loss;
        }
      }
      consider(cur, cur_loss);
      res.best_curve.push_back(res.train_loss);
    }
  }

  const int last = task.train_horizon - 1;
  std::vector<double> init(static_cast<std::size_t>(n) * kStateDim);
  for (int i = 0; i < n; ++i) {
    const double* s = task.trajectory.state(last, i);
    std::copy(s, s + kStateDim, init.data() + static_cast<std::size_t>(i) * kStateDim);
  }
  res.rollout1 = Trajectory{n, task.trajectory.dt, gnn_rollout(res.structure, lib, init, 1)};
  res.rollout10 = Trajectory{n, task.trajectory.dt, gnn_rollout(res.structure, lib, init, 10)};
  return res;
}

}  // namespace relmeta
