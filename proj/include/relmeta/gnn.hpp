#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "relmeta/common.hpp"
#include "relmeta/mlp.hpp"
#include "relmeta/rng.hpp"
#include "relmeta/structure.hpp"

namespace relmeta {

// The shared module sets: every edge module uses one spec, every node module
// another. Message μ_ij = edge_module(s_i ⊕ s_j); update
// s'_i = s_i + node_module(s_i ⊕ Σ_j μ_ji).
struct ModuleLibrary {
  MlpSpec edge_spec;
  MlpSpec node_spec;
  std::vector<ParamVector> edge_params;
  std::vector<ParamVector> node_params;

  int n_edge_modules() const { return static_cast<int>(edge_params.size()); }
  int n_node_modules() const { return static_cast<int>(node_params.size()); }
  int state_dim() const { return node_spec.output_dim(); }
  int msg_dim() const { return edge_spec.output_dim(); }

  void validate() const {
    edge_spec.validate();
    node_spec.validate();
    require(!edge_params.empty() && !node_params.empty(), "ModuleLibrary: empty module set");
    require(edge_spec.input_dim() == 2 * state_dim(),
            "ModuleLibrary: edge input must be two states");
    require(node_spec.input_dim() == state_dim() + msg_dim(),
            "ModuleLibrary: node input must be state + aggregated message");
    for (const ParamVector& p : edge_params)
      require(p.size() == edge_spec.param_count(), "ModuleLibrary: edge param size mismatch");
    for (const ParamVector& p : node_params)
      require(p.size() == node_spec.param_count(), "ModuleLibrary: node param size mismatch");
  }

  bool operator==(const ModuleLibrary&) const = default;
};

inline ModuleLibrary make_library(int n_edge_modules, int n_node_modules, std::uint64_t seed,
                                  int state_dim = 4, int msg_dim = 16) {
  ModuleLibrary lib;
  lib.edge_spec = MlpSpec{{2 * state_dim, 64, 64, msg_dim}, Activation::Tanh};
  lib.node_spec = MlpSpec{{state_dim + msg_dim, 64, state_dim}, Activation::Tanh};
  for (int m = 0; m < n_edge_modules; ++m) {
    Rng rng = Rng::substream(seed, {stream::library_init, 0, static_cast<std::uint64_t>(m)});
    lib.edge_params.push_back(init_params(lib.edge_spec, rng));
  }
  for (int g = 0; g < n_node_modules; ++g) {
    Rng rng = Rng::substream(seed, {stream::library_init, 1, static_cast<std::uint64_t>(g)});
    lib.node_params.push_back(init_params(lib.node_spec, rng));
  }
  lib.validate();
  return lib;
}

// Per-module gradient accumulators, summed in a fixed order across rows and
// tasks so pooled gradients never depend on execution schedule.
namespace detail {

inline void hash_doubles(std::uint64_t& h, std::span<const double> values) {
  for (double d : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
}

}  // namespace detail

// FNV-1a over the raw parameter bytes; distinguishes bitwise-unequal vectors.
inline std::uint64_t params_checksum(std::span<const double> params) {
  std::uint64_t h = 14695981039346656037ull;
  detail::hash_doubles(h, params);
  return h;
}

inline std::uint64_t library_checksum(const ModuleLibrary& lib) {
  std::uint64_t h = 14695981039346656037ull;
  for (const ParamVector& p : lib.edge_params) detail::hash_doubles(h, p);
  for (const ParamVector& p : lib.node_params) detail::hash_doubles(h, p);
  return h;
}

struct LibraryGrads {
  std::vector<ParamVector> edge;
  std::vector<ParamVector> node;

  static LibraryGrads zeros_like(const ModuleLibrary& lib) {
    LibraryGrads g;
    g.edge.assign(lib.n_edge_modules(), ParamVector(lib.edge_spec.param_count(), 0.0));
    g.node.assign(lib.n_node_modules(), ParamVector(lib.node_spec.param_count(), 0.0));
    return g;
  }
};

// A batch of instances (task copies) executed as one disconnected graph.
// Edges are grouped by module so each module runs one batched MLP pass per
// step; group order and within-group order are fixed at build time.
struct SuperGraph {
  int rows = 0;  // instances
  int n = 0;     // entities per instance

  struct EdgeGroup {
    std::vector<int> inst, sender, receiver;
    std::size_t size() const { return inst.size(); }
  };
  struct NodeGroup {
    std::vector<int> inst, node;
    std::size_t size() const { return inst.size(); }
  };
  std::vector<EdgeGroup> edge_groups;  // indexed by edge module
  std::vector<NodeGroup> node_groups;  // indexed by node module
};

inline SuperGraph build_supergraph(std::span<const Structure* const> structures,
                                   const ModuleLibrary& lib) {
  require(!structures.empty(), "build_supergraph: empty batch");
  const int n = structures.front()->n;
  SuperGraph sg;
  sg.rows = static_cast<int>(structures.size());
  sg.n = n;
  sg.edge_groups.resize(lib.n_edge_modules());
  sg.node_groups.resize(lib.n_node_modules());
  for (int r = 0; r < sg.rows; ++r) {
    const Structure& s = *structures[r];
    require(s.n == n, "build_supergraph: heterogeneous entity counts in batch");
    s.validate(lib.n_edge_modules(), lib.n_node_modules());
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        SuperGraph::EdgeGroup& grp = sg.edge_groups[s.edge(i, j)];
        grp.inst.push_back(r);
        grp.sender.push_back(i);
        grp.receiver.push_back(j);
      }
    for (int v = 0; v < n; ++v) {
      SuperGraph::NodeGroup& grp = sg.node_groups[s.node_assign[v]];
      grp.inst.push_back(r);
      grp.node.push_back(v);
    }
  }
  return sg;
}

inline SuperGraph build_supergraph(const std::vector<Structure>& structures,
                                   const ModuleLibrary& lib) {
  std::vector<const Structure*> ptrs;
  ptrs.reserve(structures.size());
  for (const Structure& s : structures) ptrs.push_back(&s);
  return build_supergraph(std::span<const Structure* const>(ptrs), lib);
}

struct SuperStepTape {
  std::vector<BatchTape> edge_tapes;  // parallel to edge_groups; empty groups skipped
  std::vector<BatchTape> node_tapes;
};

// One message-passing transition for every instance in the super-graph.
// states and next are rows × n × state_dim, and must not alias.
inline void super_step(const ModuleLibrary& lib, const SuperGraph& sg, const double* states,
                       double* next, SuperStepTape* tape = nullptr) {
  const int sd = lib.state_dim();
  const int md = lib.msg_dim();
  const std::size_t total = static_cast<std::size_t>(sg.rows) * sg.n;

  if (tape) {
    tape->edge_tapes.assign(sg.edge_groups.size(), BatchTape{});
    tape->node_tapes.assign(sg.node_groups.size(), BatchTape{});
  }

  std::vector<double> agg(total * md, 0.0);
  std::vector<double> x, msg;
  for (std::size_t m = 0; m < sg.edge_groups.size(); ++m) {
    const SuperGraph::EdgeGroup& grp = sg.edge_groups[m];
    if (grp.size() == 0) continue;
    x.resize(grp.size() * 2 * sd);
    for (std::size_t k = 0; k < grp.size(); ++k) {
      const double* si = states + (static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.sender[k]) * sd;
      const double* sj = states + (static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.receiver[k]) * sd;
      std::copy(si, si + sd, x.data() + k * 2 * sd);
      std::copy(sj, sj + sd, x.data() + k * 2 * sd + sd);
    }
    msg.resize(grp.size() * md);
    mlp_forward_batch(lib.edge_spec, lib.edge_params[m], x.data(),
                      static_cast<int>(grp.size()), msg.data(),
                      tape ? &tape->edge_tapes[m] : nullptr);
    for (std::size_t k = 0; k < grp.size(); ++k) {
      double* a = agg.data() + (static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.receiver[k]) * md;
      const double* mu = msg.data() + k * md;
      for (int c = 0; c < md; ++c) a[c] += mu[c];
    }
  }

  std::vector<double> xn, delta;
  for (std::size_t g = 0; g < sg.node_groups.size(); ++g) {
    const SuperGraph::NodeGroup& grp = sg.node_groups[g];
    if (grp.size() == 0) continue;
    xn.resize(grp.size() * (sd + md));
    for (std::size_t k = 0; k < grp.size(); ++k) {
      std::size_t slot = static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.node[k];
      std::copy(states + slot * sd, states + slot * sd + sd, xn.data() + k * (sd + md));
      std::copy(agg.data() + slot * md, agg.data() + slot * md + md,
                xn.data() + k * (sd + md) + sd);
    }
    delta.resize(grp.size() * sd);
    mlp_forward_batch(lib.node_spec, lib.node_params[g], xn.data(),
                      static_cast<int>(grp.size()), delta.data(),
                      tape ? &tape->node_tapes[g] : nullptr);
    for (std::size_t k = 0; k < grp.size(); ++k) {
      std::size_t slot = static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.node[k];
      for (int c = 0; c < sd; ++c) next[slot * sd + c] = states[slot * sd + c] + delta[k * sd + c];
    }
  }

  for (std::size_t i = 0; i < total * sd; ++i)
    if (!std::isfinite(next[i])) throw ModelDiverged("super_step: non-finite state");
}

// Reverse pass of one super_step. d_next is rows × n × state_dim; parameter
// gradients accumulate into grads, input-state gradients into d_states
// (overwritten). Consumes the tape.
inline void super_step_backward(const ModuleLibrary& lib, const SuperGraph& sg,
                                SuperStepTape& tape, const double* d_next, LibraryGrads& grads,
                                double* d_states) {
  const int sd = lib.state_dim();
  const int md = lib.msg_dim();
  const std::size_t total = static_cast<std::size_t>(sg.rows) * sg.n;

  std::copy(d_next, d_next + total * sd, d_states);
  std::vector<double> d_agg(total * md, 0.0);

  std::vector<double> du, dx;
  for (std::size_t g = 0; g < sg.node_groups.size(); ++g) {
    const SuperGraph::NodeGroup& grp = sg.node_groups[g];
    if (grp.size() == 0) continue;
    du.resize(grp.size() * sd);
    for (std::size_t k = 0; k < grp.size(); ++k) {
      std::size_t slot = static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.node[k];
      std::copy(d_next + slot * sd, d_next + slot * sd + sd, du.data() + k * sd);
    }
    dx.resize(grp.size() * (sd + md));
    mlp_backward_batch(tape.node_tapes[g], du.data(), grads.node[g], dx.data());
    for (std::size_t k = 0; k < grp.size(); ++k) {
      std::size_t slot = static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.node[k];
      for (int c = 0; c < sd; ++c) d_states[slot * sd + c] += dx[k * (sd + md) + c];
      for (int c = 0; c < md; ++c) d_agg[slot * md + c] += dx[k * (sd + md) + sd + c];
    }
  }

  std::vector<double> dmu;
  for (std::size_t m = 0; m < sg.edge_groups.size(); ++m) {
    const SuperGraph::EdgeGroup& grp = sg.edge_groups[m];
    if (grp.size() == 0) continue;
    dmu.resize(grp.size() * md);
    for (std::size_t k = 0; k < grp.size(); ++k) {
      std::size_t slot = static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.receiver[k];
      std::copy(d_agg.data() + slot * md, d_agg.data() + slot * md + md, dmu.data() + k * md);
    }
    dx.resize(grp.size() * 2 * sd);
    mlp_backward_batch(tape.edge_tapes[m], dmu.data(), grads.edge[m], dx.data());
    for (std::size_t k = 0; k < grp.size(); ++k) {
      double* dsi = d_states + (static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.sender[k]) * sd;
      double* dsj = d_states + (static_cast<std::size_t>(grp.inst[k]) * sg.n + grp.receiver[k]) * sd;
      for (int c = 0; c < sd; ++c) dsi[c] += dx[k * 2 * sd + c];
      for (int c = 0; c < sd; ++c) dsj[c] += dx[k * 2 * sd + sd + c];
    }
  }
}

// Single-instance transition; the batch-of-one case of the engine above.
inline std::vector<double> gnn_step(const Structure& structure, const ModuleLibrary& lib,
                                    std::span<const double> states,
                                    SuperStepTape* tape = nullptr) {
  require(static_cast<int>(states.size()) == structure.n * lib.state_dim(),
          "gnn_step: state size mismatch");
  const Structure* ptr = &structure;
  SuperGraph sg = build_supergraph(std::span<const Structure* const>(&ptr, 1), lib);
  std::vector<double> next(states.size());
  super_step(lib, sg, states.data(), next.data(), tape);
  return next;
}

// Free-running rollout; returns (horizon+1) × n × state_dim including the
// initial state. Tapes, when requested, allow a full backward pass.
struct RolloutTape {
  SuperGraph sg;
  std::vector<SuperStepTape> steps;
  std::vector<double> states;  // all recorded states
};

inline std::vector<double> gnn_rollout(const Structure& structure, const ModuleLibrary& lib,
                                       std::span<const double> init, int horizon,
                                       RolloutTape* tape = nullptr) {
  require(horizon >= 1, "gnn_rollout: horizon must be >= 1");
  const int sd = lib.state_dim();
  require(static_cast<int>(init.size()) == structure.n * sd, "gnn_rollout: init size mismatch");
  const std::size_t row = init.size();
  std::vector<double> out((horizon + 1) * row);
  std::copy(init.begin(), init.end(), out.begin());
  const Structure* ptr = &structure;
  SuperGraph sg = build_supergraph(std::span<const Structure* const>(&ptr, 1), lib);
  if (tape) {
    tape->sg = sg;
    tape->steps.assign(horizon, SuperStepTape{});
  }
  for (int t = 0; t < horizon; ++t) {
    try {
      super_step(lib, sg, out.data() + t * row, out.data() + (t + 1) * row,
                 tape ? &tape->steps[t] : nullptr);
    } catch (const ModelDiverged&) {
      throw ModelDiverged("gnn_rollout: non-finite state at step " + std::to_string(t + 1));
    }
  }
  if (tape) tape->states = out;
  return out;
}

// upstream holds d(loss)/d(state) for every recorded state, same layout as
// the rollout output; slice 0 contributes directly to d_init.
inline void gnn_rollout_backward(const ModuleLibrary& lib, RolloutTape& tape,
                                 std::span<const double> upstream, LibraryGrads& grads,
                                 double* d_init = nullptr) {
  const int sd = lib.state_dim();
  const std::size_t row = static_cast<std::size_t>(tape.sg.rows) * tape.sg.n * sd;
  const int horizon = static_cast<int>(tape.steps.size());
  require(upstream.size() == (horizon + 1) * row, "gnn_rollout_backward: upstream size mismatch");
  std::vector<double> d_state(upstream.begin() + horizon * row, upstream.end());
  std::vector<double> d_prev(row);
  for (int t = horizon - 1; t >= 0; --t) {
    super_step_backward(lib, tape.sg, tape.steps[t], d_state.data(), grads, d_prev.data());
    for (std::size_t i = 0; i < row; ++i) d_prev[i] += upstream[t * row + i];
    d_state.swap(d_prev);
  }
  if (d_init)
    for (std::size_t i = 0; i < row; ++i) d_init[i] = d_state[i];
}

}  // namespace relmeta
