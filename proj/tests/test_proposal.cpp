#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "catch_amalgamated.hpp"
#include "relmeta/anneal.hpp"

using namespace relmeta;

namespace {

EdgeDistribution uniform_distribution(int n, int n_modules) {
  EdgeDistribution d;
  d.n = n;
  d.n_modules = n_modules;
  d.probs.assign(static_cast<std::size_t>(Structure::edge_count(n)) * n_modules,
                 1.0 / n_modules);
  return d;
}

EdgeDistribution concentrated_on(const Structure& s) {
  EdgeDistribution d;
  d.n = s.n;
  d.n_modules = 2;
  d.probs.assign(s.edge_assign.size() * 2, 0.0);
  for (std::size_t e = 0; e < s.edge_assign.size(); ++e)
    d.probs[e * 2 + static_cast<std::size_t>(s.edge_assign[e])] = 1.0;
  return d;
}

void zero_params(ProposalParams& pp) {
  for (ParamVector* p : {&pp.embed_params, &pp.edge_params, &pp.node_params, &pp.score_params})
    for (double& v : *p) v = 0.0;
}

struct TrainedFixture {
  TaskSet train;
  MetaTrainResult result;
};

const TrainedFixture& trained_fixture() {
  static const TrainedFixture fixture = [] {
    TrainedFixture f;
    f.train = generate_task_set(Domain::Springs, 200, 3, 60, 501);
    MetaTrainConfig cfg;
    cfg.epochs = 60;
    cfg.sa_steps_per_epoch = 4;
    cfg.gd_steps_per_epoch = 8;
    cfg.batch_size = 64;
    cfg.proposal = ProposalMode::Mixed;
    cfg.decay = 0.99;
    cfg.temperature_floor = 1e-6;
    cfg.seed = 502;
    f.result = meta_train(f.train, cfg);
    return f;
  }();
  return fixture;
}

double exhaustive_min_loss(const ModuleLibrary& lib, const Task& task) {
  const auto total = structure_space_size(task.trajectory.n, lib.n_edge_modules());
  double best = std::numeric_limits<double>::infinity();
  for (std::uint64_t c = 0; c < total; ++c)
    best = std::min(best, structure_search_loss(
                              lib, structure_from_code(c, task.trajectory.n,
                                                       lib.n_edge_modules()),
                              task));
  return best;
}

int proposals_to_optimum(const MetaTestResult& r, double optimum, int budget) {
  for (std::size_t k = 0; k < r.best_curve.size(); ++k)
    if (r.best_curve[k] <= optimum * (1.0 + 1e-9)) return static_cast<int>(k) + 1;
  return budget + 1;
}

}  // namespace

TEST_CASE("zero parameters encode a uniform distribution") {
  ProposalParams pp = make_proposal_params(50, 2, 601);
  zero_params(pp);
  TaskSet set = generate_task_set(Domain::Springs, 1, 3, 60, 602);
  const Trajectory window = trajectory_prefix(set.tasks[0].trajectory, 50);

  EdgeDistribution d = encode(pp, window);
  d.validate();
  for (std::size_t k = 0; k < d.probs.size(); ++k) REQUIRE(d.probs[k] == 0.5);
}

TEST_CASE("encoded rows are normalized and deterministic for any parameters") {
  ProposalParams pp = make_proposal_params(50, 3, 611);
  TaskSet set = generate_task_set(Domain::Springs, 2, 4, 60, 612);
  const Trajectory window = trajectory_prefix(set.tasks[0].trajectory, 50);

  EdgeDistribution d = encode(pp, window);
  d.validate();
  REQUIRE(d.n == 4);
  REQUIRE(d.n_modules == 3);
  for (int e = 0; e < Structure::edge_count(4); ++e) {
    double sum = 0.0;
    for (double p : d.slot_probs(e)) sum += p;
    REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
  EdgeDistribution again = encode(pp, window);
  REQUIRE(d.probs == again.probs);
}

TEST_CASE("encode rejects a window of the wrong length") {
  ProposalParams pp = make_proposal_params(50, 2, 621);
  TaskSet set = generate_task_set(Domain::Springs, 1, 3, 60, 622);
  const Trajectory window = trajectory_prefix(set.tasks[0].trajectory, 49);
  REQUIRE_THROWS_AS(encode(pp, window), ContractError);
}

TEST_CASE("batched encoding equals one-task encoding bitwise") {
  ProposalParams pp = make_proposal_params(50, 2, 631);
  TaskSet set = generate_task_set(Domain::Springs, 5, 3, 60, 632);
  std::vector<Trajectory> windows;
  std::vector<const Trajectory*> ptrs;
  for (const Task& task : set.tasks) windows.push_back(trajectory_prefix(task.trajectory, 50));
  for (const Trajectory& w : windows) ptrs.push_back(&w);

  const std::vector<EdgeDistribution> batch = encode_all(pp, ptrs);
  REQUIRE(batch.size() == 5);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const EdgeDistribution single = encode(pp, windows[b]);
    REQUIRE(batch[b].probs == single.probs);
  }
}

TEST_CASE("cross-entropy gradients match finite differences in every block") {
  const int th = 3;
  ProposalParams pp;
  pp.train_horizon = th;
  pp.n_edge_modules = 3;
  pp.embed_dim = 5;
  pp.embed_spec = MlpSpec{{th * kStateDim, 7, 5}, Activation::Tanh};
  pp.edge_spec = MlpSpec{{10, 7, 5}, Activation::Tanh};
  pp.node_spec = MlpSpec{{5, 7, 5}, Activation::Tanh};
  pp.score_spec = MlpSpec{{10, 7, 3}, Activation::Tanh};
  Rng r0 = Rng::substream(641, {0});
  Rng r1 = Rng::substream(641, {1});
  Rng r2 = Rng::substream(641, {2});
  Rng r3 = Rng::substream(641, {3});
  pp.embed_params = init_params(pp.embed_spec, r0);
  pp.edge_params = init_params(pp.edge_spec, r1);
  pp.node_params = init_params(pp.node_spec, r2);
  pp.score_params = init_params(pp.score_spec, r3);
  pp.validate();

  Rng data = Rng::substream(642, {0});
  std::vector<Trajectory> windows(2);
  for (Trajectory& w : windows) {
    w.n = 3;
    w.dt = 0.1;
    w.states.resize(static_cast<std::size_t>(th) * 3 * kStateDim);
    for (double& v : w.states) v = 0.5 * data.normal();
  }
  std::vector<Structure> targets;
  targets.push_back(random_structure(3, 3, data));
  targets.push_back(random_structure(3, 3, data));
  std::vector<const Trajectory*> tp{&windows[0], &windows[1]};
  std::vector<const Structure*> sp{&targets[0], &targets[1]};

  ProposalGrads grads = ProposalGrads::zeros_like(pp);
  proposal_ce_loss(pp, tp, sp, &grads);

  const double h = 1e-6;
  auto check_block = [&](ParamVector& block, const ParamVector& g) {
    Rng pick = Rng::substream(643, {static_cast<std::uint64_t>(block.size())});
    for (int trial = 0; trial < 25; ++trial) {
      const std::size_t i = static_cast<std::size_t>(pick.uniform_int(int(block.size())));
      const double saved = block[i];
      block[i] = saved + h;
      const double up = proposal_ce_loss(pp, tp, sp);
      block[i] = saved - h;
      const double dn = proposal_ce_loss(pp, tp, sp);
      block[i] = saved;
      const double fd = (up - dn) / (2.0 * h);
      REQUIRE_THAT(g[i], Catch::Matchers::WithinAbs(fd, 1e-5 * std::max(1.0, std::abs(fd))));
    }
  };
  check_block(pp.embed_params, grads.embed);
  check_block(pp.edge_params, grads.edge);
  check_block(pp.node_params, grads.node);
  check_block(pp.score_params, grads.score);
}

TEST_CASE("uniform predictions score cross-entropy ln two") {
  ProposalParams pp = make_proposal_params(50, 2, 651);
  zero_params(pp);
  TaskSet set = generate_task_set(Domain::Springs, 3, 3, 60, 652);
  std::vector<Trajectory> windows;
  std::vector<Structure> targets;
  Rng rng = Rng::substream(653, {0});
  for (const Task& task : set.tasks) {
    windows.push_back(trajectory_prefix(task.trajectory, 50));
    targets.push_back(random_structure(3, 2, rng));
  }
  std::vector<const Trajectory*> tp;
  std::vector<const Structure*> sp;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    tp.push_back(&windows[b]);
    sp.push_back(&targets[b]);
  }
  REQUIRE_THAT(proposal_ce_loss(pp, tp, sp),
               Catch::Matchers::WithinAbs(std::log(2.0), 1e-6));
}

TEST_CASE("repeated steps overfit one fixed batch") {
  ProposalParams pp = make_proposal_params(50, 2, 661);
  ProposalAdam adam = make_proposal_adam(pp);
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 662);
  std::vector<Trajectory> windows;
  std::vector<Structure> targets;
  Rng rng = Rng::substream(663, {0});
  for (const Task& task : set.tasks) {
    windows.push_back(trajectory_prefix(task.trajectory, 50));
    targets.push_back(random_structure(3, 2, rng));
  }
  std::vector<const Trajectory*> tp;
  std::vector<const Structure*> sp;
  for (std::size_t b = 0; b < windows.size(); ++b) {
    tp.push_back(&windows[b]);
    sp.push_back(&targets[b]);
  }

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 200; ++step) {
    last = train_proposal_step(pp, adam, tp, sp);
    if (step == 0) first = last;
  }
  REQUIRE(last < std::log(2.0));
  REQUIRE(last < first);
}

TEST_CASE("a saturated encoder at its own argmax is a fixed point") {
  ProposalParams pp = make_proposal_params(50, 2, 671);
  zero_params(pp);
  const std::size_t bias = pp.score_spec.bias_offset(2);
  pp.score_params[bias] = -40.0;
  pp.score_params[bias + 1] = 40.0;

  TaskSet set = generate_task_set(Domain::Springs, 2, 3, 60, 672);
  std::vector<Trajectory> windows;
  for (const Task& task : set.tasks) windows.push_back(trajectory_prefix(task.trajectory, 50));
  std::vector<const Trajectory*> tp{&windows[0], &windows[1]};

  const EdgeDistribution d = encode(pp, windows[0]);
  for (int e = 0; e < Structure::edge_count(3); ++e)
    REQUIRE(d.slot_probs(e)[1] > 1.0 - 1e-12);

  std::vector<Structure> argmax(2, make_structure(3, 1));
  std::vector<const Structure*> sp{&argmax[0], &argmax[1]};
  ProposalGrads grads = ProposalGrads::zeros_like(pp);
  const double loss = proposal_ce_loss(pp, tp, sp, &grads);
  REQUIRE(loss < 1e-12);
  for (const ParamVector* g : {&grads.embed, &grads.edge, &grads.node, &grads.score})
    for (double v : *g) REQUIRE(std::abs(v) < 1e-6);
}

TEST_CASE("train step returns the loss before the update") {
  ProposalParams pp = make_proposal_params(50, 2, 681);
  ProposalAdam adam = make_proposal_adam(pp);
  TaskSet set = generate_task_set(Domain::Springs, 2, 3, 60, 682);
  std::vector<Trajectory> windows;
  std::vector<Structure> targets;
  Rng rng = Rng::substream(683, {0});
  for (const Task& task : set.tasks) {
    windows.push_back(trajectory_prefix(task.trajectory, 50));
    targets.push_back(random_structure(3, 2, rng));
  }
  std::vector<const Trajectory*> tp{&windows[0], &windows[1]};
  std::vector<const Structure*> sp{&targets[0], &targets[1]};

  const ProposalParams before = pp;
  const double pre = proposal_ce_loss(before, tp, sp);
  const double returned = train_proposal_step(pp, adam, tp, sp);
  REQUIRE(returned == pre);
  REQUIRE(pp.score_params != before.score_params);
}

TEST_CASE("a concentrated distribution proposes the identity") {
  Rng rng = Rng::substream(691, {0});
  const Structure s = random_structure(4, 2, rng);
  const EdgeDistribution d = concentrated_on(s);
  for (int trial = 0; trial < 50; ++trial) {
    const Structure prop = blocked_gibbs_proposal(s, d, rng);
    REQUIRE(prop.edge_assign == s.edge_assign);
  }
}

TEST_CASE("blocked proposals only touch edges into the chosen node") {
  Rng rng = Rng::substream(701, {0});
  const Structure s = random_structure(5, 2, rng);
  const EdgeDistribution d = uniform_distribution(5, 2);
  for (int trial = 0; trial < 2000; ++trial) {
    const Structure prop = blocked_gibbs_proposal(s, d, rng);
    std::vector<int> touched;
    for (int v = 0; v < 5; ++v) {
      bool diff = false;
      for (int i = 0; i < 5; ++i)
        if (i != v && prop.edge(i, v) != s.edge(i, v)) diff = true;
      if (diff) touched.push_back(v);
    }
    REQUIRE(touched.size() <= 1);
  }
}

TEST_CASE("with the node fixed, incoming edges resample at the marginals") {
  Rng seeder = Rng::substream(711, {0});
  const Structure s = random_structure(5, 2, seeder);
  const EdgeDistribution d = uniform_distribution(5, 2);
  const int target_node = 2;

  std::vector<int> ones(5, 0);
  int kept = 0;
  std::uint64_t trial = 0;
  while (kept < 10000) {
    ++trial;
    Rng peek = Rng::substream(712, {trial});
    if (peek.uniform_int(5) != target_node) continue;
    Rng rng = Rng::substream(712, {trial});
    const Structure prop = blocked_gibbs_proposal(s, d, rng);
    for (int i = 0; i < 5; ++i) {
      if (i == target_node) continue;
      ones[i] += prop.edge(i, target_node);
    }
    for (int v = 0; v < 5; ++v) {
      if (v == target_node) continue;
      for (int j = 0; j < 5; ++j)
        if (j != v) REQUIRE(prop.edge(j, v) == s.edge(j, v));
    }
    ++kept;
  }
  for (int i = 0; i < 5; ++i) {
    if (i == target_node) continue;
    REQUIRE_THAT(ones[i] / 10000.0, Catch::Matchers::WithinAbs(0.5, 0.02));
  }
}

TEST_CASE("proposals reject a distribution of the wrong size") {
  Rng rng = Rng::substream(721, {0});
  const Structure s = random_structure(4, 2, rng);
  const EdgeDistribution d = uniform_distribution(5, 2);
  REQUIRE_THROWS_AS(blocked_gibbs_proposal(s, d, rng), ContractError);
}

TEST_CASE("mixed proposer delegates bit-exactly at the rate extremes") {
  Rng seeder = Rng::substream(731, {0});
  const Structure s = random_structure(4, 2, seeder);
  const EdgeDistribution d = uniform_distribution(4, 2);

  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    Rng a = Rng::substream(732, {trial});
    Rng b = Rng::substream(732, {trial});
    REQUIRE(mixed_proposer(s, d, 1.0, 2, a).edge_assign ==
            random_proposal(s, 2, b).edge_assign);
    Rng c = Rng::substream(733, {trial});
    Rng e = Rng::substream(733, {trial});
    REQUIRE(mixed_proposer(s, d, 0.0, 2, c).edge_assign ==
            blocked_gibbs_proposal(s, d, e).edge_assign);
  }
}

TEST_CASE("mixed proposer honours the exploration rate") {
  Rng rng = Rng::substream(741, {0});
  const Structure s = random_structure(4, 2, rng);
  const EdgeDistribution identity = concentrated_on(s);

  int randoms = 0;
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    const Structure prop = mixed_proposer(s, identity, 0.2, 2, rng);
    if (prop.edge_assign != s.edge_assign) ++randoms;
  }
  REQUIRE_THAT(randoms / double(trials), Catch::Matchers::WithinAbs(0.2, 0.015));
}

TEST_CASE("training the proposal function never touches the module library") {
  ModuleLibrary lib = make_library(2, 1, 751);
  const std::uint64_t checksum = library_checksum(lib);

  ProposalParams pp = make_proposal_params(50, 2, 752);
  ProposalAdam adam = make_proposal_adam(pp);
  TaskSet set = generate_task_set(Domain::Springs, 2, 3, 60, 753);
  std::vector<Trajectory> windows;
  std::vector<Structure> targets;
  Rng rng = Rng::substream(754, {0});
  for (const Task& task : set.tasks) {
    windows.push_back(trajectory_prefix(task.trajectory, 50));
    targets.push_back(random_structure(3, 2, rng));
  }
  std::vector<const Trajectory*> tp{&windows[0], &windows[1]};
  std::vector<const Structure*> sp{&targets[0], &targets[1]};
  for (int step = 0; step < 20; ++step) train_proposal_step(pp, adam, tp, sp);

  REQUIRE(library_checksum(lib) == checksum);
}

TEST_CASE("a trained encoder predicts the structures the search settles on") {
  const TrainedFixture& f = trained_fixture();
  TaskSet held = generate_task_set(Domain::Springs, 20, 3, 60, 503);

  MetaTestConfig cfg;
  cfg.budget = 800;
  cfg.restarts = 3;
  cfg.seed = 504;

  int confident = 0, total = 0;
  for (const Task& task : held.tasks) {
    const MetaTestResult r = meta_test(task, f.result.library, cfg);
    const EdgeDistribution d = encode(f.result.proposal,
                                      trajectory_prefix(task.trajectory, task.train_horizon));
    for (std::size_t e = 0; e < r.structure.edge_assign.size(); ++e) {
      const double p =
          d.slot_probs(static_cast<int>(e))[static_cast<std::size_t>(
              r.structure.edge_assign[e])];
      if (p > 0.5) ++confident;
      ++total;
    }
  }
  REQUIRE(total == 20 * 6);
  REQUIRE(confident >= (total * 7) / 10);
}

TEST_CASE("the learned proposer reaches the optimum in fewer proposals") {
  const TrainedFixture& f = trained_fixture();
  TaskSet held = generate_task_set(Domain::Springs, 20, 3, 60, 505);

  const int budget = 800;
  std::vector<int> learned_hits, random_hits;
  for (const Task& task : held.tasks) {
    const double optimum = exhaustive_min_loss(f.result.library, task);

    MetaTestConfig rnd;
    rnd.budget = budget;
    rnd.restarts = 2;
    rnd.seed = 506;
    random_hits.push_back(
        proposals_to_optimum(meta_test(task, f.result.library, rnd), optimum, budget));

    MetaTestConfig lrn = rnd;
    lrn.proposal = ProposalMode::Learned;
    learned_hits.push_back(proposals_to_optimum(
        meta_test(task, f.result.library, lrn, &f.result.proposal), optimum, budget));
  }
  std::sort(learned_hits.begin(), learned_hits.end());
  std::sort(random_hits.begin(), random_hits.end());
  const double learned_median = 0.5 * (learned_hits[9] + learned_hits[10]);
  const double random_median = 0.5 * (random_hits[9] + random_hits[10]);
  REQUIRE(learned_median < random_median);
}
