#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "relmeta/adam.hpp"
#include "relmeta/common.hpp"
#include "relmeta/mlp.hpp"
#include "relmeta/rng.hpp"
#include "relmeta/sim.hpp"
#include "relmeta/structure.hpp"

namespace relmeta {

// Trajectory-conditioned proposal distribution over edge-module assignments.
// Encoder: per-node embedding of the flattened observed window, one
// node→edge→node refinement round, then per-slot logits from the endpoint
// embeddings. With all parameters zero the logits are zero and every slot
// is uniform over the modules.
struct ProposalParams {
  int train_horizon = 0;
  int n_edge_modules = 0;
  int embed_dim = 64;
  MlpSpec embed_spec;  // flattened node trajectory → embedding
  MlpSpec edge_spec;   // sender ⊕ receiver embedding → edge embedding
  MlpSpec node_spec;   // summed incoming edge embeddings → refined embedding
  MlpSpec score_spec;  // refined sender ⊕ receiver → module logits
  ParamVector embed_params;
  ParamVector edge_params;
  ParamVector node_params;
  ParamVector score_params;

  void validate() const {
    require(train_horizon >= 1, "ProposalParams: train_horizon must be positive");
    require(n_edge_modules >= 2, "ProposalParams: need at least two edge modules");
    require(embed_dim >= 1, "ProposalParams: embed_dim must be positive");
    embed_spec.validate();
    edge_spec.validate();
    node_spec.validate();
    score_spec.validate();
    require(embed_spec.input_dim() == train_horizon * kStateDim,
            "ProposalParams: embedder input must match the observed window");
    require(embed_spec.output_dim() == embed_dim && edge_spec.output_dim() == embed_dim &&
                node_spec.output_dim() == embed_dim,
            "ProposalParams: embedding widths disagree");
    require(edge_spec.input_dim() == 2 * embed_dim && score_spec.input_dim() == 2 * embed_dim,
            "ProposalParams: pair inputs must be two embeddings");
    require(node_spec.input_dim() == embed_dim,
            "ProposalParams: node refinement input must be one aggregate");
    require(score_spec.output_dim() == n_edge_modules,
            "ProposalParams: logit width must match the module count");
    require(embed_params.size() == embed_spec.param_count() &&
                edge_params.size() == edge_spec.param_count() &&
                node_params.size() == node_spec.param_count() &&
                score_params.size() == score_spec.param_count(),
            "ProposalParams: parameter size mismatch");
  }

  bool operator==(const ProposalParams&) const = default;
};

inline ProposalParams make_proposal_params(int train_horizon, int n_edge_modules,
                                           std::uint64_t seed, int embed_dim = 64) {
  ProposalParams pp;
  pp.train_horizon = train_horizon;
  pp.n_edge_modules = n_edge_modules;
  pp.embed_dim = embed_dim;
  pp.embed_spec = MlpSpec{{train_horizon * kStateDim, 64, embed_dim}, Activation::Tanh};
  pp.edge_spec = MlpSpec{{2 * embed_dim, 64, embed_dim}, Activation::Tanh};
  pp.node_spec = MlpSpec{{embed_dim, 64, embed_dim}, Activation::Tanh};
  pp.score_spec = MlpSpec{{2 * embed_dim, 64, n_edge_modules}, Activation::Tanh};
  Rng r0 = Rng::substream(seed, {stream::proposal_init, 0});
  Rng r1 = Rng::substream(seed, {stream::proposal_init, 1});
  Rng r2 = Rng::substream(seed, {stream::proposal_init, 2});
  Rng r3 = Rng::substream(seed, {stream::proposal_init, 3});
  pp.embed_params = init_params(pp.embed_spec, r0);
  pp.edge_params = init_params(pp.edge_spec, r1);
  pp.node_params = init_params(pp.node_spec, r2);
  pp.score_params = init_params(pp.score_spec, r3);
  pp.validate();
  return pp;
}

// Per-slot categorical distributions, rows in Structure slot order.
struct EdgeDistribution {
  int n = 0;
  int n_modules = 0;
  std::vector<double> probs;  // edge_count(n) × n_modules

  std::span<const double> slot_probs(int slot) const {
    return {probs.data() + static_cast<std::size_t>(slot) * n_modules,
            static_cast<std::size_t>(n_modules)};
  }
  std::span<const double> pair_probs(int i, int j) const {
    return slot_probs(Structure::slot(n, i, j));
  }

  void validate() const {
    require(n >= 2 && n_modules >= 1, "EdgeDistribution: bad shape");
    require(probs.size() ==
                static_cast<std::size_t>(Structure::edge_count(n)) * n_modules,
            "EdgeDistribution: probs size mismatch");
    for (int e = 0; e < Structure::edge_count(n); ++e) {
      double sum = 0.0;
      for (double p : slot_probs(e)) {
        require(std::isfinite(p) && p >= 0.0, "EdgeDistribution: bad probability");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= 1e-9, "EdgeDistribution: row does not sum to one");
    }
  }
};

namespace detail {

struct ProposalTapes {
  BatchTape embed, edge, node, score;
};

// Logits for a batch of same-sized trajectories, batch × edge_count × |H|.
// All four nets run as single batched passes; scatter orders are slot-major,
// so the result is a pure function of (params, trajectories).
inline std::vector<double> proposal_logits(const ProposalParams& pp,
                                           std::span<const Trajectory* const> trajs,
                                           ProposalTapes* tapes = nullptr) {
  pp.validate();
  const int B = static_cast<int>(trajs.size());
  require(B >= 1, "proposal_logits: empty batch");
  const int n = trajs[0]->n;
  require(n >= 2, "proposal_logits: need at least two entities");
  for (const Trajectory* t : trajs) {
    require(t->n == n, "proposal_logits: mixed entity counts in batch");
    require(t->length() == pp.train_horizon,
            "proposal_logits: trajectory length must equal the observed window");
  }
  const int D = pp.embed_dim;
  const int E = Structure::edge_count(n);
  const int H = pp.n_edge_modules;
  const int in_w = pp.embed_spec.input_dim();

  std::vector<double> x_embed(static_cast<std::size_t>(B) * n * in_w);
  for (int b = 0; b < B; ++b)
    for (int v = 0; v < n; ++v) {
      double* row = x_embed.data() + (static_cast<std::size_t>(b) * n + v) * in_w;
      for (int t = 0; t < pp.train_horizon; ++t) {
        const double* s = trajs[b]->state(t, v);
        std::copy(s, s + kStateDim, row + static_cast<std::size_t>(t) * kStateDim);
      }
    }
  std::vector<double> h0(static_cast<std::size_t>(B) * n * D);
  mlp_forward_batch(pp.embed_spec, pp.embed_params, x_embed.data(), B * n, h0.data(),
                    tapes ? &tapes->embed : nullptr);

  std::vector<double> x_edge(static_cast<std::size_t>(B) * E * 2 * D);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        double* row = x_edge.data() +
                      (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * 2 * D;
        const double* hi = h0.data() + (static_cast<std::size_t>(b) * n + i) * D;
        const double* hj = h0.data() + (static_cast<std::size_t>(b) * n + j) * D;
        std::copy(hi, hi + D, row);
        std::copy(hj, hj + D, row + D);
      }
  std::vector<double> e(static_cast<std::size_t>(B) * E * D);
  mlp_forward_batch(pp.edge_spec, pp.edge_params, x_edge.data(), B * E, e.data(),
                    tapes ? &tapes->edge : nullptr);

  std::vector<double> x_node(static_cast<std::size_t>(B) * n * D, 0.0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* er = e.data() +
                           (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * D;
        double* acc = x_node.data() + (static_cast<std::size_t>(b) * n + j) * D;
        for (int d = 0; d < D; ++d) acc[d] += er[d];
      }
  std::vector<double> h1(static_cast<std::size_t>(B) * n * D);
  mlp_forward_batch(pp.node_spec, pp.node_params, x_node.data(), B * n, h1.data(),
                    tapes ? &tapes->node : nullptr);

  std::vector<double> x_score(static_cast<std::size_t>(B) * E * 2 * D);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        double* row = x_score.data() +
                      (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * 2 * D;
        const double* hi = h1.data() + (static_cast<std::size_t>(b) * n + i) * D;
        const double* hj = h1.data() + (static_cast<std::size_t>(b) * n + j) * D;
        std::copy(hi, hi + D, row);
        std::copy(hj, hj + D, row + D);
      }
  std::vector<double> logits(static_cast<std::size_t>(B) * E * H);
  mlp_forward_batch(pp.score_spec, pp.score_params, x_score.data(), B * E, logits.data(),
                    tapes ? &tapes->score : nullptr);
  return logits;
}

inline void softmax_row(const double* logits, int width, double* out) {
  double m = logits[0];
  for (int h = 1; h < width; ++h) m = std::max(m, logits[h]);
  double sum = 0.0;
  for (int h = 0; h < width; ++h) {
    out[h] = std::exp(logits[h] - m);
    sum += out[h];
  }
  for (int h = 0; h < width; ++h) out[h] /= sum;
}

}  // namespace detail

// Distributions for a batch of trajectories in one pass over the nets.
inline std::vector<EdgeDistribution> encode_all(const ProposalParams& pp,
                                                std::span<const Trajectory* const> trajs) {
  std::vector<double> logits = detail::proposal_logits(pp, trajs);
  const int n = trajs[0]->n;
  const int E = Structure::edge_count(n);
  const int H = pp.n_edge_modules;
  std::vector<EdgeDistribution> out(trajs.size());
  for (std::size_t b = 0; b < trajs.size(); ++b) {
    out[b].n = n;
    out[b].n_modules = H;
    out[b].probs.resize(static_cast<std::size_t>(E) * H);
    for (int s = 0; s < E; ++s)
      detail::softmax_row(logits.data() + (b * E + s) * H, H,
                          out[b].probs.data() + static_cast<std::size_t>(s) * H);
    out[b].validate();
  }
  return out;
}

inline EdgeDistribution encode(const ProposalParams& pp, const Trajectory& traj) {
  const Trajectory* tp = &traj;
  return encode_all(pp, std::span<const Trajectory* const>(&tp, 1)).front();
}

// Resamples every incoming edge of one uniformly drawn node. Draw order:
// the node, then one uniform per incoming slot in ascending sender order.
inline Structure blocked_gibbs_proposal(const Structure& s, const EdgeDistribution& dist,
                                        Rng& rng) {
  require(dist.n == s.n, "blocked_gibbs_proposal: distribution is for a different size");
  Structure out = s;
  const int v = rng.uniform_int(s.n);
  for (int i = 0; i < s.n; ++i) {
    if (i == v) continue;
    std::span<const double> p = dist.pair_probs(i, v);
    const double u = rng.uniform();
    double cum = 0.0;
    int pick = dist.n_modules - 1;
    for (int h = 0; h < dist.n_modules; ++h) {
      cum += p[h];
      if (u < cum) {
        pick = h;
        break;
      }
    }
    out.set_edge(i, v, pick);
  }
  return out;
}

// Exploration mix. Rates of exactly 0 or 1 skip the selector draw, so the
// delegate sees the same random stream as a direct call.
inline Structure mixed_proposer(const Structure& s, const EdgeDistribution& dist,
                                double random_rate, int n_edge_modules, Rng& rng) {
  require(random_rate >= 0.0 && random_rate <= 1.0, "mixed_proposer: rate outside [0,1]");
  if (random_rate >= 1.0) return random_proposal(s, n_edge_modules, rng);
  if (random_rate <= 0.0) return blocked_gibbs_proposal(s, dist, rng);
  if (rng.bernoulli(random_rate)) return random_proposal(s, n_edge_modules, rng);
  return blocked_gibbs_proposal(s, dist, rng);
}

struct ProposalGrads {
  ParamVector embed, edge, node, score;

  static ProposalGrads zeros_like(const ProposalParams& pp) {
    ProposalGrads g;
    g.embed.assign(pp.embed_spec.param_count(), 0.0);
    g.edge.assign(pp.edge_spec.param_count(), 0.0);
    g.node.assign(pp.node_spec.param_count(), 0.0);
    g.score.assign(pp.score_spec.param_count(), 0.0);
    return g;
  }
};

// Mean cross-entropy of the encoded distributions against target structures,
// one term per (task, edge slot). Fills grads when requested.
inline double proposal_ce_loss(const ProposalParams& pp,
                               std::span<const Trajectory* const> trajs,
                               std::span<const Structure* const> targets,
                               ProposalGrads* grads = nullptr) {
  require(trajs.size() == targets.size(), "proposal_ce_loss: batch size mismatch");
  require(!trajs.empty(), "proposal_ce_loss: empty batch");
  const int B = static_cast<int>(trajs.size());
  const int n = trajs[0]->n;
  const int E = Structure::edge_count(n);
  const int H = pp.n_edge_modules;
  const int D = pp.embed_dim;
  for (const Structure* t : targets) {
    require(t->n == n, "proposal_ce_loss: target size mismatch");
    t->validate(H, 1);
  }

  detail::ProposalTapes tapes;
  std::vector<double> logits =
      detail::proposal_logits(pp, trajs, grads ? &tapes : nullptr);

  double loss_sum = 0.0;
  const double inv = 1.0 / (static_cast<double>(B) * E);
  std::vector<double> dlogits(grads ? logits.size() : 0);
  std::vector<double> p(H);
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < E; ++s) {
      const double* l = logits.data() + (static_cast<std::size_t>(b) * E + s) * H;
      const int target = targets[b]->edge_assign[s];
      double m = l[0];
      for (int h = 1; h < H; ++h) m = std::max(m, l[h]);
      double sum = 0.0;
      for (int h = 0; h < H; ++h) {
        p[h] = std::exp(l[h] - m);
        sum += p[h];
      }
      loss_sum += m + std::log(sum) - l[target];
      if (grads) {
        double* dl = dlogits.data() + (static_cast<std::size_t>(b) * E + s) * H;
        for (int h = 0; h < H; ++h) dl[h] = (p[h] / sum - (h == target ? 1.0 : 0.0)) * inv;
      }
    }
  const double loss = loss_sum * inv;
  if (!grads) return loss;

  *grads = ProposalGrads::zeros_like(pp);
  std::vector<double> d_xscore(static_cast<std::size_t>(B) * E * 2 * D);
  mlp_backward_batch(tapes.score, dlogits.data(), grads->score, d_xscore.data());
  std::vector<double> d_h1(static_cast<std::size_t>(B) * n * D, 0.0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* row = d_xscore.data() +
                            (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * 2 * D;
        double* di = d_h1.data() + (static_cast<std::size_t>(b) * n + i) * D;
        double* dj = d_h1.data() + (static_cast<std::size_t>(b) * n + j) * D;
        for (int d = 0; d < D; ++d) di[d] += row[d];
        for (int d = 0; d < D; ++d) dj[d] += row[D + d];
      }
  std::vector<double> d_xnode(static_cast<std::size_t>(B) * n * D);
  mlp_backward_batch(tapes.node, d_h1.data(), grads->node, d_xnode.data());
  std::vector<double> d_e(static_cast<std::size_t>(B) * E * D);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* dj = d_xnode.data() + (static_cast<std::size_t>(b) * n + j) * D;
        double* row = d_e.data() +
                      (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * D;
        std::copy(dj, dj + D, row);
      }
  std::vector<double> d_xedge(static_cast<std::size_t>(B) * E * 2 * D);
  mlp_backward_batch(tapes.edge, d_e.data(), grads->edge, d_xedge.data());
  std::vector<double> d_h0(static_cast<std::size_t>(B) * n * D, 0.0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double* row = d_xedge.data() +
                            (static_cast<std::size_t>(b) * E + Structure::slot(n, i, j)) * 2 * D;
        double* di = d_h0.data() + (static_cast<std::size_t>(b) * n + i) * D;
        double* dj = d_h0.data() + (static_cast<std::size_t>(b) * n + j) * D;
        for (int d = 0; d < D; ++d) di[d] += row[d];
        for (int d = 0; d < D; ++d) dj[d] += row[D + d];
      }
  mlp_backward_batch(tapes.embed, d_h0.data(), grads->embed);
  return loss;
}

struct ProposalAdam {
  AdamState embed, edge, node, score;
};

inline ProposalAdam make_proposal_adam(const ProposalParams& pp, AdamConfig cfg = {}) {
  return ProposalAdam{AdamState(pp.embed_spec.param_count(), cfg),
                      AdamState(pp.edge_spec.param_count(), cfg),
                      AdamState(pp.node_spec.param_count(), cfg),
                      AdamState(pp.score_spec.param_count(), cfg)};
}

// One Adam step on the batch cross-entropy; returns the loss before the
// step. All four gradient blocks are checked finite before any of them is
// applied, so a failure leaves the params whole.
inline double train_proposal_step(ProposalParams& pp, ProposalAdam& adam,
                                  std::span<const Trajectory* const> trajs,
                                  std::span<const Structure* const> targets) {
  ProposalGrads grads;
  const double loss = proposal_ce_loss(pp, trajs, targets, &grads);
  if (!std::isfinite(loss)) throw ModelDiverged("train_proposal_step: non-finite loss");
  for (const ParamVector* g : {&grads.embed, &grads.edge, &grads.node, &grads.score})
    for (double v : *g)
      if (!std::isfinite(v)) throw ModelDiverged("train_proposal_step: non-finite gradient");
  adam_step(adam.embed, pp.embed_params, grads.embed);
  adam_step(adam.edge, pp.edge_params, grads.edge);
  adam_step(adam.node, pp.node_params, grads.node);
  adam_step(adam.score, pp.score_params, grads.score);
  return loss;
}

}  // namespace relmeta
