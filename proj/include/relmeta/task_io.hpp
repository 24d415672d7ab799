#pragma once

#include <string>

#include "relmeta/json_io.hpp"
#include "relmeta/sim.hpp"

namespace relmeta {

inline constexpr int kTaskSetFormatVersion = 1;

inline Domain parse_domain(const std::string& tag) {
  if (tag == "springs") return Domain::Springs;
  if (tag == "charged") return Domain::Charged;
  throw VersionError("unknown kind tag \"" + tag + "\"");
}

inline json gen_config_to_json(const GenConfig& cfg) {
  return json{{"n_tasks", cfg.n_tasks},
              {"n_particles", cfg.n_particles},
              {"T", cfg.T},
              {"seed", cfg.seed},
              {"train_horizon", cfg.train_horizon},
              {"test_horizon", cfg.test_horizon},
              {"box", cfg.sim.box},
              {"spring_k", cfg.sim.spring_k},
              {"coulomb", cfg.sim.coulomb},
              {"softening", cfg.sim.softening},
              {"dt", cfg.sim.dt},
              {"sub_steps", cfg.sim.sub_steps}};
}

inline GenConfig gen_config_from_json(const json& j) {
  GenConfig cfg;
  cfg.n_tasks = json_get<int>(j, "n_tasks");
  cfg.n_particles = json_get<int>(j, "n_particles");
  cfg.T = json_get<int>(j, "T");
  cfg.seed = json_get<std::uint64_t>(j, "seed");
  cfg.train_horizon = json_get<int>(j, "train_horizon");
  cfg.test_horizon = json_get<int>(j, "test_horizon");
  cfg.sim.box = json_get<double>(j, "box");
  cfg.sim.spring_k = json_get<double>(j, "spring_k");
  cfg.sim.coulomb = json_get<double>(j, "coulomb");
  cfg.sim.softening = json_get<double>(j, "softening");
  cfg.sim.dt = json_get<double>(j, "dt");
  cfg.sim.sub_steps = json_get<int>(j, "sub_steps");
  return cfg;
}

inline json task_set_to_json(const TaskSet& set) {
  json tasks = json::array();
  for (const Task& task : set.tasks) {
    json states = json::array();
    const Trajectory& traj = task.trajectory;
    for (int t = 0; t < traj.length(); ++t) {
      json row = json::array();
      for (int i = 0; i < traj.n; ++i) {
        const double* s = traj.state(t, i);
        row.push_back(json::array({s[0], s[1], s[2], s[3]}));
      }
      states.push_back(std::move(row));
    }
    tasks.push_back(json{{"truth", task.truth.labels},
                         {"train_horizon", task.train_horizon},
                         {"test_horizon", task.test_horizon},
                         {"states", std::move(states)}});
  }
  return json{{"format_version", kTaskSetFormatVersion},
              {"kind", domain_name(set.kind)},
              {"sim_config", gen_config_to_json(set.config)},
              {"tasks", std::move(tasks)}};
}

inline TaskSet task_set_from_json(const json& doc) {
  int version = json_get<int>(doc, "format_version");
  if (version != kTaskSetFormatVersion)
    throw VersionError("unsupported task-set format_version " + std::to_string(version));
  TaskSet set;
  set.kind = parse_domain(json_get<std::string>(doc, "kind"));
  set.config = gen_config_from_json(json_field(doc, "sim_config"));

  const json& tasks = json_field(doc, "tasks");
  if (!tasks.is_array()) throw ParseError("field \"tasks\": expected an array");
  const int n = set.config.n_particles;
  for (const json& tj : tasks) {
    Task task;
    task.truth.n_entities = n;
    task.truth.labels = json_get<std::vector<int>>(tj, "truth");
    if (task.truth.labels.size() != RelationGraph::pair_count(n))
      throw ParseError("task truth: expected " + std::to_string(RelationGraph::pair_count(n)) +
                       " pair labels, got " + std::to_string(task.truth.labels.size()));
    task.train_horizon = json_get<int>(tj, "train_horizon");
    task.test_horizon = json_get<int>(tj, "test_horizon");

    const json& states = json_field(tj, "states");
    if (!states.is_array() || states.size() != static_cast<std::size_t>(set.config.T))
      throw ParseError("task states: expected " + std::to_string(set.config.T) + " rows");
    Trajectory& traj = task.trajectory;
    traj.n = n;
    traj.dt = set.config.sim.dt;
    traj.states.reserve(static_cast<std::size_t>(set.config.T) * n * kStateDim);
    for (const json& row : states) {
      if (!row.is_array() || row.size() != static_cast<std::size_t>(n))
        throw ParseError("task states: expected " + std::to_string(n) + " entities per row");
      for (const json& entity : row) {
        if (!entity.is_array() || entity.size() != kStateDim)
          throw ParseError("task states: expected 4 numbers per entity");
        for (const json& v : entity) {
          if (!v.is_number()) throw ParseError("task states: expected a number");
          traj.states.push_back(v.get<double>());
        }
      }
    }
    set.tasks.push_back(std::move(task));
  }
  return set;
}

inline void save_task_set(const TaskSet& set, const std::string& path) {
  write_atomic(path, json_dump(task_set_to_json(set)) + "\n");
}

inline TaskSet load_task_set(const std::string& path) {
  return task_set_from_json(json_parse_file(path));
}

}  // namespace relmeta
