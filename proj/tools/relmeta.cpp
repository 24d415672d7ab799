// relmeta: generate benchmark task sets, meta-train a module library with
// structure search, evaluate on held-out tasks, and recover hidden entities.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "relmeta/anneal.hpp"
#include "relmeta/checkpoint.hpp"
#include "relmeta/latent.hpp"
#include "relmeta/metrics.hpp"
#include "relmeta/task_io.hpp"

namespace relmeta {
namespace {

constexpr int kReportFormatVersion = 1;

void config_require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

struct ExperimentConfig {
  std::string domain = "springs";
  int n_train_tasks = 500;
  int n_test_tasks = 50;
  int n_particles = 5;
  int T = 60;
  int train_horizon = 50;
  int test_horizon = 10;
  int n_edge_modules = 2;
  int n_node_modules = 1;
  int msg_dim = 16;
  int embed_dim = 64;
  int epochs = 300;
  int sa_steps_per_epoch = 16;
  int gd_steps_per_epoch = 8;
  int batch_size = 64;
  double t0 = 5e-4;
  double decay = 0.9981;
  double temperature_floor = 6e-4;
  std::string proposal = "mixed";
  double mixed_random_rate = 0.1;
  double library_lr = 1e-3;
  double proposal_lr = 1e-3;
  int budget = 2000;
  int restarts = 5;
  int latent_samples = 512;
  int latent_top_k = 8;
  int latent_gd_steps = 100;
  double latent_lr = 1e-2;
  int latent_rounds = 5;
  bool latent_pin = false;
  bool latent_infer_edges = false;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  void validate() const {
    config_require(domain == "springs" || domain == "charged",
                   "config: domain must be \"springs\" or \"charged\"");
    config_require(n_train_tasks >= 1 && n_test_tasks >= 1,
                   "config: task counts must be positive");
    config_require(n_particles >= 2, "config: n_particles must be at least 2");
    config_require(T >= 2 && train_horizon >= 2 && test_horizon >= 1,
                   "config: horizons must be positive");
    config_require(train_horizon + test_horizon <= T, "config: horizons exceed T");
    config_require(proposal == "random" || proposal == "learned" || proposal == "mixed",
                   "config: proposal must be random, learned, or mixed");
    config_require(budget >= 1 && restarts >= 1,
                   "config: budget and restarts must be positive");
  }
};

json config_to_json(const ExperimentConfig& c) {
  return json{{"domain", c.domain},
              {"n_train_tasks", c.n_train_tasks},
              {"n_test_tasks", c.n_test_tasks},
              {"n_particles", c.n_particles},
              {"T", c.T},
              {"train_horizon", c.train_horizon},
              {"test_horizon", c.test_horizon},
              {"n_edge_modules", c.n_edge_modules},
              {"n_node_modules", c.n_node_modules},
              {"msg_dim", c.msg_dim},
              {"embed_dim", c.embed_dim},
              {"epochs", c.epochs},
              {"sa_steps_per_epoch", c.sa_steps_per_epoch},
              {"gd_steps_per_epoch", c.gd_steps_per_epoch},
              {"batch_size", c.batch_size},
              {"t0", c.t0},
              {"decay", c.decay},
              {"temperature_floor", c.temperature_floor},
              {"proposal", c.proposal},
              {"mixed_random_rate", c.mixed_random_rate},
              {"library_lr", c.library_lr},
              {"proposal_lr", c.proposal_lr},
              {"budget", c.budget},
              {"restarts", c.restarts},
              {"latent_samples", c.latent_samples},
              {"latent_top_k", c.latent_top_k},
              {"latent_gd_steps", c.latent_gd_steps},
              {"latent_lr", c.latent_lr},
              {"latent_rounds", c.latent_rounds},
              {"latent_pin", c.latent_pin},
              {"latent_infer_edges", c.latent_infer_edges},
              {"seed", c.seed},
              {"out_dir", c.out_dir}};
}

// Artifacts embed the config without out_dir so reruns into different
// folders stay byte-identical.
json config_echo(const ExperimentConfig& c) {
  json doc = config_to_json(c);
  doc.erase("out_dir");
  return doc;
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  const json defaults = config_to_json(c);
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (!defaults.contains(it.key()))
      throw ParseError("config: unknown key \"" + it.key() + "\"");

  auto get_int = [&](const char* key, int& out) {
    if (doc.contains(key)) out = json_get<int>(doc, key);
  };
  auto get_double = [&](const char* key, double& out) {
    if (doc.contains(key)) out = json_get<double>(doc, key);
  };
  auto get_string = [&](const char* key, std::string& out) {
    if (doc.contains(key)) out = json_get<std::string>(doc, key);
  };
  auto get_bool = [&](const char* key, bool& out) {
    if (doc.contains(key)) out = json_get<bool>(doc, key);
  };

  get_string("domain", c.domain);
  get_int("n_train_tasks", c.n_train_tasks);
  get_int("n_test_tasks", c.n_test_tasks);
  get_int("n_particles", c.n_particles);
  get_int("T", c.T);
  get_int("train_horizon", c.train_horizon);
  get_int("test_horizon", c.test_horizon);
  get_int("n_edge_modules", c.n_edge_modules);
  get_int("n_node_modules", c.n_node_modules);
  get_int("msg_dim", c.msg_dim);
  get_int("embed_dim", c.embed_dim);
  get_int("epochs", c.epochs);
  get_int("sa_steps_per_epoch", c.sa_steps_per_epoch);
  get_int("gd_steps_per_epoch", c.gd_steps_per_epoch);
  get_int("batch_size", c.batch_size);
  get_double("t0", c.t0);
  get_double("decay", c.decay);
  get_double("temperature_floor", c.temperature_floor);
  get_string("proposal", c.proposal);
  get_double("mixed_random_rate", c.mixed_random_rate);
  get_double("library_lr", c.library_lr);
  get_double("proposal_lr", c.proposal_lr);
  get_int("budget", c.budget);
  get_int("restarts", c.restarts);
  get_int("latent_samples", c.latent_samples);
  get_int("latent_top_k", c.latent_top_k);
  get_int("latent_gd_steps", c.latent_gd_steps);
  get_double("latent_lr", c.latent_lr);
  get_int("latent_rounds", c.latent_rounds);
  get_bool("latent_pin", c.latent_pin);
  get_bool("latent_infer_edges", c.latent_infer_edges);
  if (doc.contains("seed")) c.seed = json_get<std::uint64_t>(doc, "seed");
  get_string("out_dir", c.out_dir);
  c.validate();
  return c;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;      // overrides config when set
  std::string proposal;     // overrides config when set
  std::int64_t seed = -1;   // overrides config when >= 0
  std::int64_t budget = -1; // overrides config when >= 0
};

ExperimentConfig load_config(const CommonArgs& args) {
  ExperimentConfig cfg = config_from_json(json_parse_file(args.config_path));
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (!args.proposal.empty()) cfg.proposal = args.proposal;
  if (args.budget >= 0) cfg.budget = static_cast<int>(args.budget);
  cfg.validate();
  return cfg;
}

std::string out_path(const ExperimentConfig& cfg, const char* name) {
  std::filesystem::create_directories(cfg.out_dir);
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

ProposalMode parse_proposal(const std::string& name) { return proposal_mode_from_name(name); }

GenConfig gen_config(const ExperimentConfig& cfg, int n_tasks, std::uint64_t seed) {
  GenConfig g;
  g.n_tasks = n_tasks;
  g.n_particles = cfg.n_particles;
  g.T = cfg.T;
  g.seed = seed;
  g.train_horizon = cfg.train_horizon;
  g.test_horizon = cfg.test_horizon;
  g.sim = default_sim_config(parse_domain(cfg.domain));
  return g;
}

int cmd_generate(const ExperimentConfig& cfg) {
  const Domain domain = parse_domain(cfg.domain);
  TaskSet train = generate_task_set(domain, gen_config(cfg, cfg.n_train_tasks, cfg.seed));
  TaskSet test = generate_task_set(domain, gen_config(cfg, cfg.n_test_tasks, cfg.seed + 1));
  save_task_set(train, out_path(cfg, "tasks_train.json"));
  save_task_set(test, out_path(cfg, "tasks_test.json"));
  std::printf("wrote %d train and %d test tasks under %s\n", cfg.n_train_tasks,
              cfg.n_test_tasks, cfg.out_dir.c_str());
  return 0;
}

MetaTrainConfig train_config(const ExperimentConfig& cfg, bool fixed_structures) {
  MetaTrainConfig mt;
  mt.n_edge_modules = cfg.n_edge_modules;
  mt.n_node_modules = cfg.n_node_modules;
  mt.msg_dim = cfg.msg_dim;
  mt.embed_dim = cfg.embed_dim;
  mt.epochs = cfg.epochs;
  mt.sa_steps_per_epoch = cfg.sa_steps_per_epoch;
  mt.gd_steps_per_epoch = cfg.gd_steps_per_epoch;
  mt.batch_size = cfg.batch_size;
  mt.t0 = cfg.t0;
  mt.decay = cfg.decay;
  mt.temperature_floor = cfg.temperature_floor;
  mt.proposal = parse_proposal(cfg.proposal);
  mt.mixed_random_rate = cfg.mixed_random_rate;
  mt.fixed_structures = fixed_structures;
  mt.seed = cfg.seed;
  mt.library_adam.lr = cfg.library_lr;
  mt.proposal_adam.lr = cfg.proposal_lr;
  return mt;
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "epoch,mean_train_loss,mean_test_loss,acceptance_rate,temperature,proposal_mode\n";
  char line[256];
  for (const TrainLogRow& r : log) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g,%.17g,%s\n", r.epoch,
                  r.mean_train_loss, r.mean_test_loss, r.acceptance_rate, r.temperature,
                  proposal_mode_name(r.proposal));
    out += line;
  }
  return out;
}

int cmd_meta_train(const ExperimentConfig& cfg, const std::string& tasks_path,
                   const std::string& fixed_structures) {
  config_require(fixed_structures.empty() || fixed_structures == "truth",
                 "meta-train: --fixed-structures only supports \"truth\"");
  const std::string path = tasks_path.empty()
                               ? out_path(cfg, "tasks_train.json")
                               : tasks_path;
  TaskSet tasks = load_task_set(path);
  config_require(domain_name(tasks.kind) == cfg.domain,
                 "meta-train: task file domain does not match the config");

  MetaTrainResult result = meta_train(tasks, train_config(cfg, !fixed_structures.empty()));
  save_checkpoint(out_path(cfg, "checkpoint.json"), result.library, result.proposal,
                  config_echo(cfg));
  write_atomic(out_path(cfg, "train_log.csv"), train_log_csv(result.log));
  std::printf("trained %d epochs on %zu tasks; final mean train loss %.6g\n", cfg.epochs,
              tasks.tasks.size(), result.log.empty() ? 0.0 : result.log.back().mean_train_loss);
  return 0;
}

int cmd_meta_test(const ExperimentConfig& cfg, const std::string& tasks_path,
                  const std::string& checkpoint_path) {
  const std::string tpath = tasks_path.empty() ? out_path(cfg, "tasks_test.json") : tasks_path;
  const std::string cpath =
      checkpoint_path.empty() ? out_path(cfg, "checkpoint.json") : checkpoint_path;
  TaskSet tasks = load_task_set(tpath);
  config_require(domain_name(tasks.kind) == cfg.domain,
                 "meta-test: task file domain does not match the config");
  Checkpoint ck = load_checkpoint(cpath, cfg.domain);

  MetaTestConfig mt;
  mt.budget = cfg.budget;
  mt.restarts = cfg.restarts;
  mt.proposal = parse_proposal(cfg.proposal);
  mt.mixed_random_rate = mt.proposal == ProposalMode::Mixed ? cfg.mixed_random_rate : 0.0;
  mt.seed = cfg.seed;

  std::vector<MetricsRow> rows;
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    const Task& task = tasks.tasks[t];
    const auto start = std::chrono::steady_clock::now();
    MetaTestResult res = meta_test(task, ck.library, mt,
                                   mt.proposal == ProposalMode::Random ? nullptr
                                                                       : &ck.proposal);
    MetricsRow row;
    row.task = static_cast<int>(t);
    const Trajectory truth_tail =
        trajectory_slice(task.trajectory, task.train_horizon - 1, task.test_horizon + 1);
    row.mse_k1 = kstep_mse(res.rollout1, truth_tail, 1);
    row.mse_k10 = kstep_mse(res.rollout10, truth_tail, std::min(10, task.test_horizon));
    row.edge_acc = edge_accuracy(res.structure, task.truth, cfg.n_edge_modules);
    row.proposals = static_cast<double>(res.proposals_used);
    row.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }

  MetricsReport report = make_metrics_report(std::move(rows));
  write_atomic(out_path(cfg, "metrics.csv"), metrics_csv(report));
  write_atomic(out_path(cfg, "timing.csv"), timing_csv(report));

  json per_task = json::array();
  for (const MetricsRow& r : report.rows)
    per_task.push_back(json{{"task", r.task},
                            {"mse_k1", r.mse_k1},
                            {"mse_k10", r.mse_k10},
                            {"edge_accuracy", r.edge_acc},
                            {"proposals_used", r.proposals}});
  const MetricsRow& a = report.aggregate;
  json doc{{"format_version", kReportFormatVersion},
           {"kind", "relmeta-metrics"},
           {"config", config_echo(cfg)},
           {"aggregate",
            json{{"mse_k1", a.mse_k1},
                 {"mse_k10", a.mse_k10},
                 {"edge_accuracy", a.edge_acc},
                 {"proposals_used", a.proposals}}},
           {"per_task", per_task}};
  write_atomic(out_path(cfg, "report.json"), json_dump(doc) + "\n");
  std::printf("meta-test on %zu tasks: mean edge accuracy %.4f, mean 1-step mse %.6g\n",
              report.rows.size(), a.edge_acc, a.mse_k1);
  return 0;
}

int cmd_infer_latent(const ExperimentConfig& cfg, const std::string& tasks_path,
                     const std::string& checkpoint_path) {
  const std::string tpath = tasks_path.empty() ? out_path(cfg, "tasks_test.json") : tasks_path;
  const std::string cpath =
      checkpoint_path.empty() ? out_path(cfg, "checkpoint.json") : checkpoint_path;
  TaskSet tasks = load_task_set(tpath);
  config_require(domain_name(tasks.kind) == cfg.domain,
                 "infer-latent: task file domain does not match the config");
  Checkpoint ck = load_checkpoint(cpath, cfg.domain);

  LatentConfig lc;
  lc.samples = cfg.latent_samples;
  lc.top_k = cfg.latent_top_k;
  lc.gd_steps = cfg.latent_gd_steps;
  lc.lr = cfg.latent_lr;
  lc.rounds = cfg.latent_rounds;
  lc.pin_latent = cfg.latent_pin;
  lc.infer_edges = cfg.latent_infer_edges;
  lc.box = default_sim_config(parse_domain(cfg.domain)).box;

  json reports = json::array();
  for (std::size_t t = 0; t < tasks.tasks.size(); ++t) {
    const Task& task = tasks.tasks[t];
    const int hidden = task.trajectory.n - 1;
    Trajectory full = trajectory_prefix(task.trajectory, task.train_horizon);
    Trajectory observed = drop_node(full, hidden);
    Structure structure = structure_from_truth(task.truth);
    lc.seed = cfg.seed + t;
    LatentResult res = infer_latent(observed, structure, ck.library, lc);

    json trajectory = json::array();
    const int T = static_cast<int>(res.best.trajectory.size()) / kStateDim;
    for (int step = 0; step < T; ++step) {
      json state = json::array();
      for (int c = 0; c < kStateDim; ++c)
        state.push_back(res.best.trajectory[static_cast<std::size_t>(step) * kStateDim + c]);
      trajectory.push_back(std::move(state));
    }
    reports.push_back(json{{"task", static_cast<int>(t)},
                           {"best_init_state", res.best.init_state},
                           {"loss", res.best.loss},
                           {"diverged", res.best.diverged},
                           {"round_best", res.round_best},
                           {"recovered_trajectory", std::move(trajectory)}});
  }

  json doc{{"format_version", kReportFormatVersion},
           {"kind", "relmeta-latent"},
           {"config", config_echo(cfg)},
           {"tasks", std::move(reports)}};
  write_atomic(out_path(cfg, "latent_report.json"), json_dump(doc) + "\n");
  std::printf("latent inference on %zu tasks written to %s\n", tasks.tasks.size(),
              out_path(cfg, "latent_report.json").c_str());
  return 0;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

int cmd_report(const ExperimentConfig& cfg, const std::string& metrics_path) {
  const std::string path = metrics_path.empty() ? out_path(cfg, "metrics.csv") : metrics_path;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("report: empty metrics file");
  if (line != "task,mse_k1,mse_k10,edge_accuracy,proposals_used")
    throw ParseError("report: unexpected metrics columns");

  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != 5) throw ParseError("report: malformed metrics row");
    if (fields[0] == "mean") continue;
    MetricsRow r;
    r.task = std::stoi(fields[0]);
    r.mse_k1 = std::stod(fields[1]);
    r.mse_k10 = std::stod(fields[2]);
    r.edge_acc = std::stod(fields[3]);
    r.proposals = std::stod(fields[4]);
    rows.push_back(r);
  }
  if (rows.empty()) throw ParseError("report: no per-task rows");
  const MetricsRow agg = aggregate_rows(rows);

  char buf[256];
  std::snprintf(buf, sizeof buf, "mean,%.17g,%.17g,%.17g,%.17g\n", agg.mse_k1, agg.mse_k10,
                agg.edge_acc, agg.proposals);
  const std::string table =
      std::string("task,mse_k1,mse_k10,edge_accuracy,proposals_used\n") + buf;
  write_atomic(out_path(cfg, "report_aggregate.csv"), table);
  std::printf("%s", table.c_str());
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"modular relational inference toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string tasks_path, checkpoint_path, metrics_path, fixed_structures;

  auto add_common = [&](CLI::App* sub, bool with_proposal, bool with_budget) {
    sub->add_option("--config", args.config_path, "experiment config JSON")->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out_dir, "override the output directory");
    if (with_proposal)
      sub->add_option("--proposal", args.proposal, "random, learned, or mixed");
    if (with_budget) sub->add_option("--budget", args.budget, "meta-test proposal budget");
  };

  CLI::App* generate = app.add_subcommand("generate", "simulate and save task sets");
  add_common(generate, false, false);

  CLI::App* train = app.add_subcommand("meta-train", "train modules and the proposal encoder");
  add_common(train, true, false);
  train->add_option("--tasks", tasks_path, "task-set file (default out/tasks_train.json)");
  train->add_option("--fixed-structures", fixed_structures,
                    "pin structures instead of searching (\"truth\")");

  CLI::App* test = app.add_subcommand("meta-test", "structure search on held-out tasks");
  add_common(test, true, true);
  test->add_option("--tasks", tasks_path, "task-set file (default out/tasks_test.json)");
  test->add_option("--checkpoint", checkpoint_path, "checkpoint (default out/checkpoint.json)");

  CLI::App* latent = app.add_subcommand("infer-latent", "recover a hidden particle per task");
  add_common(latent, false, false);
  latent->add_option("--tasks", tasks_path, "task-set file (default out/tasks_test.json)");
  latent->add_option("--checkpoint", checkpoint_path,
                     "checkpoint (default out/checkpoint.json)");

  CLI::App* report = app.add_subcommand("report", "recompute aggregates from metrics.csv");
  add_common(report, false, false);
  report->add_option("--metrics", metrics_path, "metrics CSV (default out/metrics.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  bool computing = false;
  try {
    const ExperimentConfig cfg = load_config(args);
    computing = true;
    if (generate->parsed()) return cmd_generate(cfg);
    if (train->parsed()) return cmd_meta_train(cfg, tasks_path, fixed_structures);
    if (test->parsed()) return cmd_meta_test(cfg, tasks_path, checkpoint_path);
    if (latent->parsed()) return cmd_infer_latent(cfg, tasks_path, checkpoint_path);
    if (report->parsed()) return cmd_report(cfg, metrics_path);
    std::fprintf(stderr, "no subcommand selected\n");
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    // Everything raised before the config is settled is a usage problem;
    // afterwards it is a runtime failure (bad data file, divergence, I/O).
    std::fprintf(stderr, "%s error: %s\n", computing ? "runtime" : "config", e.what());
    return computing ? 3 : 2;
  }
}

}  // namespace
}  // namespace relmeta

int main(int argc, char** argv) { return relmeta::run(argc, argv); }
