#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "catch_amalgamated.hpp"
#include "relmeta/anneal.hpp"

using namespace relmeta;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> enumerate_losses(const ModuleLibrary& lib, const Task& task) {
  const auto total = structure_space_size(task.trajectory.n, lib.n_edge_modules());
  std::vector<double> losses(total);
  for (std::uint64_t c = 0; c < total; ++c)
    losses[c] = structure_search_loss(
        lib, structure_from_code(c, task.trajectory.n, lib.n_edge_modules()), task);
  return losses;
}

std::uint64_t argmin_index(const std::vector<double>& v) {
  std::uint64_t best = 0;
  for (std::uint64_t i = 1; i < v.size(); ++i)
    if (v[i] < v[best]) best = i;
  return best;
}

std::vector<Structure> random_structures(const TaskSet& set, int n_edge_modules,
                                         std::uint64_t seed) {
  std::vector<Structure> out;
  for (std::size_t t = 0; t < set.tasks.size(); ++t) {
    Rng rng = Rng::substream(seed, {stream::structure_init, static_cast<std::uint64_t>(t)});
    out.push_back(random_structure(set.tasks[t].trajectory.n, n_edge_modules, rng));
  }
  return out;
}

}  // namespace

TEST_CASE("random proposal reassigns exactly one edge slot") {
  Rng rng = Rng::substream(7, {1});
  const Structure base = random_structure(5, 4, rng);
  for (int trial = 0; trial < 200; ++trial) {
    Structure prop = random_proposal(base, 4, rng);
    int diff = 0;
    for (std::size_t e = 0; e < base.edge_assign.size(); ++e)
      if (prop.edge_assign[e] != base.edge_assign[e]) ++diff;
    REQUIRE(diff == 1);
    REQUIRE(prop.node_assign == base.node_assign);
  }
}

TEST_CASE("random proposal picks among twenty slots uniformly") {
  Rng rng = Rng::substream(8, {1});
  const Structure base = random_structure(5, 2, rng);
  REQUIRE(base.edge_assign.size() == 20);
  std::vector<int> hits(20, 0);
  const int trials = 10000;
  for (int trial = 0; trial < trials; ++trial) {
    Structure prop = random_proposal(base, 2, rng);
    for (std::size_t e = 0; e < base.edge_assign.size(); ++e)
      if (prop.edge_assign[e] != base.edge_assign[e]) ++hits[e];
  }
  for (int e = 0; e < 20; ++e)
    REQUIRE_THAT(hits[e] / double(trials), Catch::Matchers::WithinAbs(0.05, 0.01));
}

TEST_CASE("metropolis rule always takes improvements") {
  Rng rng = Rng::substream(9, {1});
  for (int trial = 0; trial < 100; ++trial) {
    const double cur = rng.uniform();
    REQUIRE(sa_accept(cur, cur - 0.1 * rng.uniform(), 1e-9, rng));
    REQUIRE(sa_accept(cur, cur, 1e-9, rng));
  }
}

TEST_CASE("metropolis acceptance frequency matches the exponential rule") {
  Rng rng = Rng::substream(10, {1});
  const int trials = 10000;
  int warm = 0, cold = 0;
  for (int trial = 0; trial < trials; ++trial) {
    if (sa_accept(1.0, 1.5, 0.5, rng)) ++warm;   // delta equals temperature
    if (sa_accept(1.0, 1.5, 0.025, rng)) ++cold; // temperature = delta / 20
  }
  REQUIRE_THAT(warm / double(trials), Catch::Matchers::WithinAbs(std::exp(-1.0), 0.02));
  REQUIRE(cold / double(trials) <= 1e-3);
}

TEST_CASE("metropolis rule rejects non-finite proposals and escapes broken states") {
  Rng rng = Rng::substream(11, {1});
  REQUIRE_FALSE(sa_accept(1.0, kInf, 1.0, rng));
  REQUIRE_FALSE(sa_accept(1.0, std::nan(""), 1.0, rng));
  REQUIRE(sa_accept(kInf, 1.0, 1.0, rng));
  REQUIRE(sa_accept(std::nan(""), 1.0, 1.0, rng));
}

TEST_CASE("anneal state caches reproduce full recomputation") {
  ModuleLibrary lib = make_library(2, 1, 31);
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 32);
  AnnealState st = init_anneal_state(lib, set, random_structures(set, 2, 33), 34);

  const std::vector<int> starts = train_starts(set.tasks.front().train_horizon);
  for (std::size_t t = 0; t < set.tasks.size(); ++t) {
    REQUIRE(st.train_loss[t] == structure_search_loss(lib, st.structures[t], set.tasks[t]));
    const Trajectory* traj = &set.tasks[t].trajectory;
    const Structure* s = &st.structures[t];
    const double pooled = pooled_transition_loss(lib, std::span<const Trajectory* const>(&traj, 1),
                                                 std::span<const Structure* const>(&s, 1), starts)
                              .loss;
    REQUIRE_THAT(st.train_loss[t], Catch::Matchers::WithinRel(pooled, 1e-10));
  }
  REQUIRE(st.temperature == st.mean_train_loss());
  REQUIRE(st.t0 == st.temperature);

  AnnealState pinned = init_anneal_state(lib, set, st.structures, 34, 0.25);
  REQUIRE(pinned.temperature == 0.25);
}

TEST_CASE("sa sweep leaves a brute-force optimum in place at low temperature") {
  ModuleLibrary lib = make_library(2, 1, 41);
  TaskSet set = generate_task_set(Domain::Springs, 1, 3, 60, 42);
  const std::vector<double> losses = enumerate_losses(lib, set.tasks[0]);
  const std::uint64_t best = argmin_index(losses);
  double second = kInf;
  for (std::uint64_t c = 0; c < losses.size(); ++c)
    if (c != best) second = std::min(second, losses[c]);
  REQUIRE(second > losses[best] * (1.0 + 1e-9));

  std::vector<Structure> init{structure_from_code(best, 3, 2)};
  AnnealState st = init_anneal_state(lib, set, init, 43, 1e-12);
  const Proposer propose = make_random_proposer(2);
  for (int sweep = 0; sweep < 100; ++sweep) sa_epoch(st, lib, set, propose);
  REQUIRE(st.structures[0].edge_assign == init[0].edge_assign);
  REQUIRE(st.train_loss[0] == losses[best]);
}

TEST_CASE("sa sweep statistics count tasks and an identity proposer changes nothing") {
  ModuleLibrary lib = make_library(2, 1, 51);
  TaskSet set = generate_task_set(Domain::Springs, 5, 3, 60, 52);
  AnnealState st = init_anneal_state(lib, set, random_structures(set, 2, 53), 54);
  const std::vector<Structure> before = st.structures;
  const std::vector<double> before_loss = st.train_loss;

  const Proposer identity = [](int, const Structure& cur, Rng&) { return cur; };
  SaEpochStats stats = sa_epoch(st, lib, set, identity);
  REQUIRE(stats.proposals == 5);
  REQUIRE(stats.acceptance_rate() == 1.0);
  REQUIRE(st.sweep == 1);
  for (std::size_t t = 0; t < before.size(); ++t) {
    REQUIRE(st.structures[t].edge_assign == before[t].edge_assign);
    REQUIRE(st.train_loss[t] == before_loss[t]);
  }
}

TEST_CASE("sa sweep isolates per-task proposer failures") {
  ModuleLibrary lib = make_library(2, 1, 61);
  TaskSet set = generate_task_set(Domain::Springs, 3, 3, 60, 62);
  AnnealState st = init_anneal_state(lib, set, random_structures(set, 2, 63), 64, 10.0);
  const Structure poisoned = st.structures[1];

  const Proposer propose = [](int task, const Structure& cur, Rng& rng) {
    if (task == 1) throw ModelDiverged("synthetic per-task failure");
    return random_proposal(cur, 2, rng);
  };
  SaEpochStats stats = sa_epoch(st, lib, set, propose);
  REQUIRE(stats.proposals == 3);
  REQUIRE(stats.task_errors == 1);
  REQUIRE(st.structures[1].edge_assign == poisoned.edge_assign);
  REQUIRE(st.sweep == 1);
}

TEST_CASE("temperature follows the cooling schedule exactly") {
  ModuleLibrary lib = make_library(2, 1, 71);
  TaskSet set = generate_task_set(Domain::Springs, 2, 3, 60, 72);
  AnnealState st = init_anneal_state(lib, set, random_structures(set, 2, 73), 74, 0.5, 0.9, 1e-2);
  const Proposer identity = [](int, const Structure& cur, Rng&) { return cur; };
  for (int k = 1; k <= 60; ++k) {
    sa_epoch(st, lib, set, identity);
    REQUIRE(st.temperature == std::max(0.5 * std::pow(0.9, double(k)), 0.5 * 1e-2));
  }
  REQUIRE(st.temperature == 0.5 * 1e-2);
}

TEST_CASE("sa sweep honours a task batch and keys streams by global index") {
  ModuleLibrary lib = make_library(2, 1, 81);
  TaskSet set = generate_task_set(Domain::Springs, 5, 3, 60, 82);
  AnnealState full = init_anneal_state(lib, set, random_structures(set, 2, 83), 84);
  AnnealState sub = full;

  const Proposer propose = make_random_proposer(2);
  sa_epoch(full, lib, set, propose);
  const std::vector<int> batch{1, 3};
  SaEpochStats stats = sa_epoch(sub, lib, set, propose, batch);

  REQUIRE(stats.proposals == 2);
  AnnealState untouched = init_anneal_state(lib, set, random_structures(set, 2, 83), 84);
  for (int t : {0, 2, 4}) {
    REQUIRE(sub.structures[t].edge_assign == untouched.structures[t].edge_assign);
    REQUIRE(sub.train_loss[t] == untouched.train_loss[t]);
  }
  for (int t : {1, 3}) {
    REQUIRE(sub.structures[t].edge_assign == full.structures[t].edge_assign);
    REQUIRE(sub.train_loss[t] == full.train_loss[t]);
  }
}

TEST_CASE("pooled update on self-generated data leaves parameters untouched") {
  ModuleLibrary lib = make_library(2, 1, 91);
  for (ParamVector& p : lib.edge_params)
    for (double& v : p) v = 0.0;
  for (ParamVector& p : lib.node_params)
    for (double& v : p) v = 0.0;
  Rng rng = Rng::substream(92, {1});
  const Structure s = random_structure(3, 2, rng);

  std::vector<double> init(3 * kStateDim);
  for (double& v : init) v = 0.2 * rng.normal();
  const int horizon = 20;
  const std::vector<double> flat = gnn_rollout(s, lib, init, horizon);
  for (int t = 0; t <= horizon; ++t)
    for (std::size_t c = 0; c < init.size(); ++c) REQUIRE(flat[t * init.size() + c] == init[c]);

  TaskSet set;
  set.kind = Domain::Springs;
  Task task;
  task.trajectory.n = 3;
  task.trajectory.dt = 0.1;
  task.trajectory.states = flat;
  task.train_horizon = horizon + 1;
  task.truth = RelationGraph{3, std::vector<int>(3, 0)};
  set.tasks.push_back(task);

  AnnealState st = init_anneal_state(lib, set, {s}, 93);
  REQUIRE(st.train_loss[0] == 0.0);

  LibraryAdam adam = make_library_adam(lib);
  const std::vector<ParamVector> edge_before = lib.edge_params;
  const std::vector<ParamVector> node_before = lib.node_params;
  GdEpochResult res = gd_epoch(st, lib, set, adam);
  REQUIRE(res.applied);
  REQUIRE(res.test_loss == 0.0);
  REQUIRE(lib.edge_params == edge_before);
  REQUIRE(lib.node_params == node_before);
}

TEST_CASE("the model reproduces its own rollout to near machine precision") {
  ModuleLibrary lib = make_library(2, 1, 94);
  Rng rng = Rng::substream(95, {1});
  const Structure s = random_structure(3, 2, rng);
  std::vector<double> init(3 * kStateDim);
  for (double& v : init) v = 0.2 * rng.normal();
  const std::vector<double> flat = gnn_rollout(s, lib, init, 20);

  TaskSet set;
  set.kind = Domain::Springs;
  Task task;
  task.trajectory.n = 3;
  task.trajectory.dt = 0.1;
  task.trajectory.states = flat;
  task.train_horizon = 21;
  task.truth = RelationGraph{3, std::vector<int>(3, 0)};
  set.tasks.push_back(task);

  AnnealState st = init_anneal_state(lib, set, {s}, 96);
  REQUIRE(st.train_loss[0] <= 1e-25);
}

TEST_CASE("pooled update leaves an unused module untouched") {
  ModuleLibrary lib = make_library(2, 1, 101);
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 102);
  std::vector<Structure> structures(set.tasks.size(), make_structure(3, 0));
  AnnealState st = init_anneal_state(lib, set, structures, 103);

  LibraryAdam adam = make_library_adam(lib);
  const ParamVector unused_before = lib.edge_params[1];
  const ParamVector used_before = lib.edge_params[0];
  GdEpochResult res = gd_epoch(st, lib, set, adam);
  REQUIRE(res.applied);
  REQUIRE(lib.edge_params[1] == unused_before);
  REQUIRE(lib.edge_params[0] != used_before);

  const std::vector<int> starts = train_starts(set.tasks.front().train_horizon);
  for (std::size_t t = 0; t < set.tasks.size(); ++t)
    REQUIRE(st.train_loss[t] == structure_search_loss(lib, st.structures[t], set.tasks[t]));
}

TEST_CASE("pooled update skips and reports when the model blows up") {
  ModuleLibrary lib = make_library(2, 1, 111);
  for (double& v : lib.node_params[0]) v = 1e308;
  TaskSet set = generate_task_set(Domain::Springs, 2, 3, 60, 112);
  std::vector<Structure> structures(2, make_structure(3, 0));
  AnnealState st;
  st.structures = structures;
  st.node_sse.assign(2, std::vector<double>(3, 0.0));
  st.train_loss.assign(2, 1.0);
  st.starts = train_starts(set.tasks.front().train_horizon);

  LibraryAdam adam = make_library_adam(lib);
  const std::vector<ParamVector> before = lib.edge_params;
  GdEpochResult res = gd_epoch(st, lib, set, adam, false);
  REQUIRE_FALSE(res.applied);
  REQUIRE_FALSE(res.note.empty());
  REQUIRE(lib.edge_params == before);
}

TEST_CASE("pooled update over a batch pools exactly the chosen tasks") {
  ModuleLibrary lib = make_library(2, 1, 121);
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 122);
  AnnealState st = init_anneal_state(lib, set, random_structures(set, 2, 123), 124);

  const std::vector<int> batch{0, 2};
  std::vector<const Trajectory*> trajs{&set.tasks[0].trajectory, &set.tasks[2].trajectory};
  std::vector<const Structure*> structs{&st.structures[0], &st.structures[2]};
  const std::vector<int> starts = test_starts(set.tasks.front().train_horizon);
  const double expected = pooled_transition_loss(lib, trajs, structs, starts).loss;

  LibraryAdam adam = make_library_adam(lib);
  GdEpochResult res = gd_epoch(st, lib, set, adam, false, 64, batch);
  REQUIRE(res.applied);
  REQUIRE(res.test_loss == expected);
}

TEST_CASE("alternating optimization improves a held-out probe task") {
  TaskSet train = generate_task_set(Domain::Springs, 20, 3, 60, 131);
  TaskSet probe = generate_task_set(Domain::Springs, 1, 3, 60, 132);

  ModuleLibrary lib = make_library(2, 1, 133);
  AnnealState st = init_anneal_state(lib, train, random_structures(train, 2, 134), 135);
  LibraryAdam adam = make_library_adam(lib);
  const Proposer propose = make_random_proposer(2);

  const Structure probe_truth = structure_from_truth(probe.tasks[0].truth);
  const double initial = structure_search_loss(lib, probe_truth, probe.tasks[0]);
  for (int epoch = 0; epoch < 200; ++epoch) {
    sa_epoch(st, lib, train, propose);
    gd_epoch(st, lib, train, adam);
  }
  const double final_loss = structure_search_loss(lib, probe_truth, probe.tasks[0]);
  REQUIRE(final_loss < initial);
}

TEST_CASE("meta train with zero epochs returns the initialized library") {
  TaskSet set = generate_task_set(Domain::Springs, 3, 3, 60, 141);
  MetaTrainConfig cfg;
  cfg.seed = 142;
  MetaTrainResult r = meta_train(set, cfg);

  const ModuleLibrary fresh = make_library(2, 1, 142);
  REQUIRE(r.library.edge_params == fresh.edge_params);
  REQUIRE(r.library.node_params == fresh.node_params);
  REQUIRE(r.log.empty());
  REQUIRE(r.structures.size() == 3);
  for (std::size_t t = 0; t < 3; ++t) {
    Rng rng = Rng::substream(142, {stream::structure_init, static_cast<std::uint64_t>(t)});
    REQUIRE(r.structures[t].edge_assign == random_structure(3, 2, rng).edge_assign);
  }
}

TEST_CASE("meta train is deterministic, including subsampled batches") {
  TaskSet set = generate_task_set(Domain::Springs, 8, 3, 60, 151);
  MetaTrainConfig cfg;
  cfg.epochs = 6;
  cfg.sa_steps_per_epoch = 2;
  cfg.gd_steps_per_epoch = 2;
  cfg.batch_size = 4;
  cfg.proposal = ProposalMode::Mixed;
  cfg.seed = 152;

  MetaTrainResult a = meta_train(set, cfg);
  MetaTrainResult b = meta_train(set, cfg);
  REQUIRE(a.log.size() == 6);
  REQUIRE(a.log == b.log);
  REQUIRE(library_checksum(a.library) == library_checksum(b.library));
  for (std::size_t t = 0; t < set.tasks.size(); ++t)
    REQUIRE(a.structures[t].edge_assign == b.structures[t].edge_assign);
}

TEST_CASE("meta train logs the schedule it ran") {
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 161);
  MetaTrainConfig cfg;
  cfg.epochs = 3;
  cfg.sa_steps_per_epoch = 2;
  cfg.gd_steps_per_epoch = 1;
  cfg.t0 = 0.5;
  cfg.decay = 0.9;
  cfg.seed = 162;

  MetaTrainResult r = meta_train(set, cfg);
  REQUIRE(r.log.size() == 3);
  for (int e = 0; e < 3; ++e) {
    REQUIRE(r.log[e].epoch == e);
    REQUIRE(r.log[e].proposal == ProposalMode::Random);
    REQUIRE(r.log[e].temperature ==
            std::max(0.5 * std::pow(0.9, double((e + 1) * 2)), 0.5 * 1e-3));
    REQUIRE(std::isfinite(r.log[e].mean_train_loss));
    REQUIRE(std::isfinite(r.log[e].mean_test_loss));
    REQUIRE(r.log[e].acceptance_rate >= 0.0);
    REQUIRE(r.log[e].acceptance_rate <= 1.0);
  }
}

TEST_CASE("meta train can pin structures to ground truth") {
  TaskSet set = generate_task_set(Domain::Springs, 4, 3, 60, 171);
  MetaTrainConfig cfg;
  cfg.epochs = 2;
  cfg.fixed_structures = true;
  cfg.seed = 172;

  MetaTrainResult r = meta_train(set, cfg);
  for (std::size_t t = 0; t < set.tasks.size(); ++t) {
    const Structure truth = structure_from_truth(set.tasks[t].truth);
    REQUIRE(r.structures[t].edge_assign == truth.edge_assign);
  }
  for (const TrainLogRow& row : r.log) REQUIRE(row.acceptance_rate == 0.0);
}

TEST_CASE("meta train beats the identity baseline tenfold") {
  TaskSet set = generate_task_set(Domain::Springs, 30, 3, 60, 181);

  double identity_loss = 0.0;
  const std::vector<int> starts = train_starts(set.tasks.front().train_horizon);
  for (const Task& task : set.tasks) {
    double sse = 0.0;
    for (int s : starts)
      for (int i = 0; i < task.trajectory.n; ++i)
        for (int c = 0; c < kStateDim; ++c) {
          const double d = task.trajectory.state(s + 1, i)[c] - task.trajectory.state(s, i)[c];
          sse += d * d;
        }
    identity_loss +=
        sse / (double(starts.size()) * double(task.trajectory.n) * double(kStateDim));
  }
  identity_loss /= double(set.tasks.size());

  MetaTrainConfig cfg;
  cfg.epochs = 300;
  cfg.seed = 182;
  MetaTrainResult r = meta_train(set, cfg);
  REQUIRE(r.log.back().mean_train_loss * 10.0 <= identity_loss);
}

TEST_CASE("meta test tracks its best structure honestly") {
  ModuleLibrary lib = make_library(2, 1, 191);
  TaskSet set = generate_task_set(Domain::Springs, 1, 3, 60, 192);
  const std::uint64_t checksum_before = library_checksum(lib);

  MetaTestConfig cfg;
  cfg.budget = 40;
  cfg.restarts = 3;
  cfg.seed = 193;
  MetaTestResult r = meta_test(set.tasks[0], lib, cfg);

  REQUIRE(r.proposals_used == 40);
  REQUIRE(r.best_curve.size() == 40);
  for (std::size_t k = 1; k < r.best_curve.size(); ++k)
    REQUIRE(r.best_curve[k] <= r.best_curve[k - 1]);
  REQUIRE(r.train_loss == structure_search_loss(lib, r.structure, set.tasks[0]));
  REQUIRE(r.best_curve.back() == r.train_loss);
  REQUIRE(r.proposals_to_best <= r.proposals_used);
  REQUIRE(r.rollout1.length() == 2);
  REQUIRE(r.rollout10.length() == 11);
  REQUIRE(library_checksum(lib) == checksum_before);

  MetaTestResult again = meta_test(set.tasks[0], lib, cfg);
  REQUIRE(again.structure.edge_assign == r.structure.edge_assign);
  REQUIRE(again.train_loss == r.train_loss);

  cfg.budget = 1;
  MetaTestResult tiny = meta_test(set.tasks[0], lib, cfg);
  REQUIRE(tiny.proposals_used == 1);
  REQUIRE(tiny.best_curve.size() == 1);
}

TEST_CASE("meta test matches the exhaustive optimum on most held-out tasks") {
  TaskSet train = generate_task_set(Domain::Springs, 12, 3, 60, 201);
  MetaTrainConfig tc;
  tc.epochs = 80;
  tc.gd_steps_per_epoch = 8;
  tc.fixed_structures = true;
  tc.seed = 202;
  MetaTrainResult trained = meta_train(train, tc);

  TaskSet held = generate_task_set(Domain::Springs, 20, 3, 60, 203);
  MetaTestConfig cfg;
  cfg.budget = 600;
  cfg.restarts = 3;
  cfg.seed = 204;

  int hits = 0;
  for (const Task& task : held.tasks) {
    const std::vector<double> losses = enumerate_losses(trained.library, task);
    const double best = losses[argmin_index(losses)];
    MetaTestResult r = meta_test(task, trained.library, cfg);
    if (r.train_loss <= best * 1.01) ++hits;
  }
  REQUIRE(hits >= 18);
}

TEST_CASE("annealing escapes a structure greedy descent cannot leave") {
  ModuleLibrary lib = make_library(2, 1, 2);
  TaskSet set = generate_task_set(Domain::Springs, 1, 3, 60, 3);
  const std::vector<double> losses = enumerate_losses(lib, set.tasks[0]);

  const std::uint64_t decoy = 38;
  const std::uint64_t best = argmin_index(losses);
  REQUIRE(best != decoy);

  const Structure start = structure_from_code(decoy, 3, 2);
  for (std::size_t e = 0; e < start.edge_assign.size(); ++e) {
    Structure nb = start;
    nb.edge_assign[e] = 1 - nb.edge_assign[e];
    std::uint64_t code = 0;
    for (std::size_t k = nb.edge_assign.size(); k-- > 0;)
      code = code * 2 + static_cast<std::uint64_t>(nb.edge_assign[k]);
    REQUIRE(losses[code] > losses[decoy] * (1.0 + 1e-9));
  }

  AnnealState st = init_anneal_state(lib, set, {start}, 2024, 0.0, 0.99, 1e-3);
  REQUIRE(st.temperature == losses[decoy]);
  const Proposer propose = make_random_proposer(2);
  double best_seen = st.train_loss[0];
  for (int sweep = 0; sweep < 300; ++sweep) {
    sa_epoch(st, lib, set, propose);
    best_seen = std::min(best_seen, st.train_loss[0]);
  }
  REQUIRE(best_seen <= losses[best] * 1.01);
  REQUIRE(best_seen < losses[decoy]);
}
