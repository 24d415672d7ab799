#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "relmeta/adam.hpp"
#include "relmeta/common.hpp"
#include "relmeta/gnn.hpp"
#include "relmeta/rng.hpp"
#include "relmeta/sim.hpp"
#include "relmeta/structure.hpp"

namespace relmeta {

// Loss returned when the joint rollout leaves the finite range. Large enough
// to lose against any real candidate, finite so the search keeps moving.
inline constexpr double kLatentSentinel = 1e30;

struct LatentEval {
  double loss = kLatentSentinel;
  bool diverged = false;
};

// A candidate hidden particle: its initial state, the trajectory the model
// implies for it, and how well that explains the observed nodes.
struct LatentHypothesis {
  std::vector<double> init_state;  // 4-vector
  std::vector<double> trajectory;  // T × 4, the hidden node's implied states
  double loss = std::numeric_limits<double>::infinity();
  bool diverged = false;
};

struct LatentConfig {
  int samples = 512;  // random draws per round
  int top_k = 8;      // candidates refined per round
  int gd_steps = 100; // Adam steps per refined candidate
  double lr = 1e-2;
  int rounds = 5;
  double box = 5.0;       // positions sampled uniformly in [-box, box]
  double vel_norm = 0.5;  // sampled speed, uniform direction
  bool clamp_observed = true;  // feed observed nodes their true states each step
  bool pin_latent = false;     // freeze the hidden node at its initial state
  bool infer_edges = false;    // also search the hidden node's incident edges
  std::uint64_t seed = 0;

  void validate() const {
    require(samples >= 1, "LatentConfig: samples must be positive");
    require(top_k >= 0, "LatentConfig: negative top_k");
    require(gd_steps >= 0, "LatentConfig: negative gd_steps");
    require(lr > 0.0, "LatentConfig: lr must be positive");
    require(rounds >= 1, "LatentConfig: rounds must be positive");
    require(box > 0.0, "LatentConfig: box must be positive");
    require(vel_norm >= 0.0, "LatentConfig: negative vel_norm");
  }

  bool operator==(const LatentConfig&) const = default;
};

namespace detail {

// Joint forward pass with the hidden node appended as index n-1. In clamped
// mode the observed nodes re-enter each step at their recorded states and
// only the hidden node's state is carried; in free-run mode everything is
// one model rollout. Because the carried trajectory is exactly the model's
// own chain, its one-step self-consistency residual is identically zero, so
// the loss reduces to the observed-node MSE.
struct LatentChain {
  std::vector<double> preds;   // (T-1) × n × 4 one-step predictions
  std::vector<double> latent;  // T × 4 carried hidden states
  std::vector<SuperStepTape> tapes;
  bool diverged = false;
};

inline LatentChain run_latent_chain(std::span<const double> init_state,
                                    const Trajectory& observed, const Structure& structure,
                                    const ModuleLibrary& lib, const SuperGraph& sg,
                                    bool want_tapes, bool pin_latent) {
  const int sd = lib.state_dim();
  const int n = structure.n;
  const int T = observed.length();
  LatentChain chain;
  chain.preds.assign(static_cast<std::size_t>(T - 1) * n * sd, 0.0);
  chain.latent.assign(static_cast<std::size_t>(T) * sd, 0.0);
  if (want_tapes) chain.tapes.assign(T - 1, SuperStepTape{});
  std::copy(init_state.begin(), init_state.end(), chain.latent.begin());

  std::vector<double> x(static_cast<std::size_t>(n) * sd);
  for (int t = 0; t < T - 1; ++t) {
    for (int i = 0; i < n - 1; ++i)
      std::copy(observed.state(t, i), observed.state(t, i) + sd, x.data() + i * sd);
    std::copy(chain.latent.data() + static_cast<std::size_t>(t) * sd,
              chain.latent.data() + static_cast<std::size_t>(t + 1) * sd,
              x.data() + static_cast<std::size_t>(n - 1) * sd);
    try {
      super_step(lib, sg, x.data(), chain.preds.data() + static_cast<std::size_t>(t) * n * sd,
                 want_tapes ? &chain.tapes[t] : nullptr);
    } catch (const ModelDiverged&) {
      chain.diverged = true;
      return chain;
    }
    const double* next_latent =
        chain.preds.data() + (static_cast<std::size_t>(t) * n + (n - 1)) * sd;
    double* carried = chain.latent.data() + static_cast<std::size_t>(t + 1) * sd;
    if (pin_latent) {
      std::copy(chain.latent.data() + static_cast<std::size_t>(t) * sd,
                chain.latent.data() + static_cast<std::size_t>(t) * sd + sd, carried);
    } else {
      std::copy(next_latent, next_latent + sd, carried);
      for (int c = 0; c < sd; ++c)
        if (!std::isfinite(carried[c])) {
          chain.diverged = true;
          return chain;
        }
    }
  }
  return chain;
}

}  // namespace detail

// Explanation loss of one hidden-node initial state: MSE of the model's
// one-step predictions against the observed nodes across the whole window,
// with the hidden node's states supplied by the model's own chain. grad,
// when non-empty, receives d(loss)/d(init_state). latent_traj, when given,
// receives the implied T × 4 hidden trajectory.
inline LatentEval latent_loss(std::span<const double> init_state, const Trajectory& observed,
                              const Structure& structure, const ModuleLibrary& lib,
                              const SuperGraph& sg, std::span<double> grad = {},
                              bool clamp_observed = true, bool pin_latent = false,
                              std::vector<double>* latent_traj = nullptr) {
  const int sd = lib.state_dim();
  require(structure.n == observed.n + 1, "latent_loss: structure must cover one hidden node");
  require(static_cast<int>(init_state.size()) == sd, "latent_loss: init_state size mismatch");
  require(grad.empty() || static_cast<int>(grad.size()) == sd,
          "latent_loss: grad size mismatch");
  require(observed.length() >= 2, "latent_loss: need at least one transition");
  structure.validate(lib.n_edge_modules(), lib.n_node_modules());

  const int n = structure.n;
  const int T = observed.length();
  const double norm = static_cast<double>(T - 1) * (n - 1) * sd;

  LatentEval out;
  if (!clamp_observed) {
    std::vector<double> x0(static_cast<std::size_t>(n) * sd);
    for (int i = 0; i < n - 1; ++i)
      std::copy(observed.state(0, i), observed.state(0, i) + sd, x0.data() + i * sd);
    std::copy(init_state.begin(), init_state.end(),
              x0.data() + static_cast<std::size_t>(n - 1) * sd);
    RolloutTape tape;
    std::vector<double> flat;
    try {
      flat = gnn_rollout(structure, lib, x0, T - 1, grad.empty() ? nullptr : &tape);
    } catch (const ModelDiverged&) {
      if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
      out.diverged = true;
      return out;
    }
    const std::size_t row = static_cast<std::size_t>(n) * sd;
    double sse = 0.0;
    std::vector<double> upstream(grad.empty() ? 0 : flat.size(), 0.0);
    for (int t = 1; t < T; ++t)
      for (int i = 0; i < n - 1; ++i)
        for (int c = 0; c < sd; ++c) {
          const double r = flat[t * row + i * sd + c] - observed.state(t, i)[c];
          sse += r * r;
          if (!grad.empty()) upstream[t * row + i * sd + c] = 2.0 * r / norm;
        }
    out.loss = sse / norm;
    if (!std::isfinite(out.loss)) {
      if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
      out.loss = kLatentSentinel;
      out.diverged = true;
      return out;
    }
    if (!grad.empty()) {
      LibraryGrads scratch = LibraryGrads::zeros_like(lib);
      std::vector<double> d_init(row);
      gnn_rollout_backward(lib, tape, upstream, scratch, d_init.data());
      std::copy(d_init.begin() + static_cast<std::ptrdiff_t>((n - 1) * sd), d_init.end(),
                grad.begin());
    }
    if (latent_traj) {
      latent_traj->assign(static_cast<std::size_t>(T) * sd, 0.0);
      for (int t = 0; t < T; ++t)
        std::copy(flat.data() + t * row + static_cast<std::size_t>(n - 1) * sd,
                  flat.data() + t * row + static_cast<std::size_t>(n) * sd,
                  latent_traj->data() + static_cast<std::size_t>(t) * sd);
    }
    return out;
  }

  detail::LatentChain chain = detail::run_latent_chain(init_state, observed, structure, lib, sg,
                                                       !grad.empty(), pin_latent);
  if (chain.diverged) {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    out.diverged = true;
    return out;
  }
  double sse = 0.0;
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < n - 1; ++i)
      for (int c = 0; c < sd; ++c) {
        const double r = chain.preds[(static_cast<std::size_t>(t) * n + i) * sd + c] -
                         observed.state(t + 1, i)[c];
        sse += r * r;
      }
  out.loss = sse / norm;
  if (!std::isfinite(out.loss)) {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    out.loss = kLatentSentinel;
    out.diverged = true;
    return out;
  }

  if (!grad.empty()) {
    LibraryGrads scratch = LibraryGrads::zeros_like(lib);
    std::vector<double> g(sd, 0.0), d_next(static_cast<std::size_t>(n) * sd),
        d_prev(static_cast<std::size_t>(n) * sd);
    for (int t = T - 2; t >= 0; --t) {
      for (int i = 0; i < n - 1; ++i)
        for (int c = 0; c < sd; ++c) {
          const double r = chain.preds[(static_cast<std::size_t>(t) * n + i) * sd + c] -
                           observed.state(t + 1, i)[c];
          d_next[static_cast<std::size_t>(i) * sd + c] = 2.0 * r / norm;
        }
      for (int c = 0; c < sd; ++c)
        d_next[static_cast<std::size_t>(n - 1) * sd + c] = pin_latent ? 0.0 : g[c];
      super_step_backward(lib, sg, chain.tapes[t], d_next.data(), scratch, d_prev.data());
      for (int c = 0; c < sd; ++c) {
        const double carried = pin_latent ? g[c] : 0.0;
        g[c] = d_prev[static_cast<std::size_t>(n - 1) * sd + c] + carried;
      }
    }
    std::copy(g.begin(), g.end(), grad.begin());
  }
  if (latent_traj) *latent_traj = chain.latent;
  return out;
}

inline LatentEval latent_loss(std::span<const double> init_state, const Trajectory& observed,
                              const Structure& structure, const ModuleLibrary& lib,
                              std::span<double> grad = {}, bool clamp_observed = true,
                              bool pin_latent = false,
                              std::vector<double>* latent_traj = nullptr) {
  const Structure* sp = &structure;
  const SuperGraph sg = build_supergraph(std::span<const Structure* const>(&sp, 1), lib);
  return latent_loss(init_state, observed, structure, lib, sg, grad, clamp_observed,
                     pin_latent, latent_traj);
}

struct LatentResult {
  LatentHypothesis best;
  std::vector<double> round_best;  // best-so-far loss after each round
  Structure structure;             // incident edges possibly re-assigned
};

// Random-sampling plus gradient-refinement search over the hidden node's
// initial state. Each round draws cfg.samples candidates, refines the
// cfg.top_k best with Adam, and keeps a global best-so-far; ties go to the
// earliest sample. Fresh rounds keep sampling so refinement cannot trap the
// search near one basin.
inline LatentResult infer_latent(const Trajectory& observed, const Structure& structure,
                                 const ModuleLibrary& lib, const LatentConfig& cfg) {
  cfg.validate();
  const int sd = lib.state_dim();
  LatentResult res;
  res.structure = structure;
  auto rebuild_sg = [&lib](const Structure& s) {
    const Structure* sp = &s;
    return build_supergraph(std::span<const Structure* const>(&sp, 1), lib);
  };
  SuperGraph sg = rebuild_sg(res.structure);

  std::vector<double> best_init;
  double best_loss = std::numeric_limits<double>::infinity();
  bool best_diverged = true;

  auto consider = [&](const std::vector<double>& init, double loss, bool diverged) {
    if (loss < best_loss) {
      best_loss = loss;
      best_init = init;
      best_diverged = diverged;
    }
  };

  struct Candidate {
    double loss;
    int index;
    std::vector<double> init;
  };

  for (int round = 0; round < cfg.rounds; ++round) {
    std::vector<Candidate> drawn;
    drawn.reserve(cfg.samples);
    for (int k = 0; k < cfg.samples; ++k) {
      Rng rng = Rng::substream(cfg.seed, {stream::latent, static_cast<std::uint64_t>(round),
                                          static_cast<std::uint64_t>(k)});
      std::vector<double> init(sd);
      init[0] = (2.0 * rng.uniform() - 1.0) * cfg.box;
      init[1] = (2.0 * rng.uniform() - 1.0) * cfg.box;
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      init[2] = cfg.vel_norm * std::cos(angle);
      init[3] = cfg.vel_norm * std::sin(angle);
      const LatentEval eval = latent_loss(init, observed, res.structure, lib, sg, {},
                                          cfg.clamp_observed, cfg.pin_latent);
      consider(init, eval.loss, eval.diverged);
      drawn.push_back(Candidate{eval.loss, k, std::move(init)});
    }

    std::sort(drawn.begin(), drawn.end(), [](const Candidate& a, const Candidate& b) {
      if (a.loss != b.loss) return a.loss < b.loss;
      return a.index < b.index;
    });
    const int refine = std::min<int>(cfg.top_k, static_cast<int>(drawn.size()));
    for (int r = 0; r < refine && cfg.gd_steps > 0; ++r) {
      std::vector<double> init = drawn[r].init;
      AdamState adam(sd, AdamConfig{cfg.lr});
      std::vector<double> grad(sd, 0.0);
      for (int step = 0; step < cfg.gd_steps; ++step) {
        const LatentEval eval = latent_loss(init, observed, res.structure, lib, sg, grad,
                                            cfg.clamp_observed, cfg.pin_latent);
        consider(init, eval.loss, eval.diverged);
        if (eval.diverged) break;
        try {
          adam_step(adam, init, grad);
        } catch (const ModelDiverged&) {
          break;
        }
      }
      const LatentEval eval = latent_loss(init, observed, res.structure, lib, sg, {},
                                          cfg.clamp_observed, cfg.pin_latent);
      consider(init, eval.loss, eval.diverged);
    }

    if (cfg.infer_edges && !best_init.empty()) {
      const int hidden = res.structure.n - 1;
      for (int i = 0; i < hidden; ++i) {
        for (int dir = 0; dir < 2; ++dir) {
          const int from = dir == 0 ? i : hidden;
          const int to = dir == 0 ? hidden : i;
          int best_module = res.structure.edge(from, to);
          double local = best_loss;
          for (int m = 0; m < lib.n_edge_modules(); ++m) {
            if (m == res.structure.edge(from, to)) continue;
            Structure trial = res.structure;
            trial.set_edge(from, to, m);
            const LatentEval eval = latent_loss(best_init, observed, trial, lib, {},
                                                cfg.clamp_observed, cfg.pin_latent);
            if (eval.loss < local) {
              local = eval.loss;
              best_module = m;
            }
          }
          if (best_module != res.structure.edge(from, to)) {
            res.structure.set_edge(from, to, best_module);
            sg = rebuild_sg(res.structure);
          }
          best_loss = std::min(best_loss, local);
        }
      }
    }

    res.round_best.push_back(best_loss);
  }

  res.best.init_state = best_init;
  res.best.loss = best_loss;
  res.best.diverged = best_diverged;
  if (!best_init.empty() && !best_diverged) {
    latent_loss(best_init, observed, res.structure, lib, sg, {}, cfg.clamp_observed,
                cfg.pin_latent, &res.best.trajectory);
  } else if (!best_init.empty()) {
    res.best.trajectory.assign(static_cast<std::size_t>(observed.length()) * sd, 0.0);
    for (int t = 0; t < observed.length(); ++t)
      std::copy(best_init.begin(), best_init.end(),
                res.best.trajectory.begin() + static_cast<std::ptrdiff_t>(t) * sd);
  }
  return res;
}

// Drops one node from a trajectory; the planted-latent benchmarks observe
// all nodes but the last.
inline Trajectory drop_node(const Trajectory& traj, int hidden) {
  require(hidden >= 0 && hidden < traj.n, "drop_node: node out of range");
  Trajectory out;
  out.n = traj.n - 1;
  out.dt = traj.dt;
  out.states.reserve(static_cast<std::size_t>(traj.length()) * out.n * kStateDim);
  for (int t = 0; t < traj.length(); ++t)
    for (int i = 0; i < traj.n; ++i) {
      if (i == hidden) continue;
      const double* s = traj.state(t, i);
      out.states.insert(out.states.end(), s, s + kStateDim);
    }
  return out;
}

// Mean squared error between a recovered latent trajectory and the hidden
// node's true states over the shared window.
inline double latent_trajectory_mse(const std::vector<double>& recovered,
                                    const Trajectory& truth, int hidden) {
  const int T = truth.length();
  require(static_cast<int>(recovered.size()) == T * kStateDim,
          "latent_trajectory_mse: length mismatch");
  double sse = 0.0;
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < kStateDim; ++c) {
      const double d = recovered[static_cast<std::size_t>(t) * kStateDim + c] -
                       truth.state(t, hidden)[c];
      sse += d * d;
    }
  return sse / (static_cast<double>(T) * kStateDim);
}

}  // namespace relmeta
