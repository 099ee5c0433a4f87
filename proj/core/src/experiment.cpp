#include "collab/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/digest.hpp"
#include "collab/errors.hpp"
#include "collab/socket_transport.hpp"

namespace collab {

namespace fs = std::filesystem;

namespace {

constexpr Method kAllMethods[] = {Method::no_colla, Method::original_gl, Method::unrolled_gl, Method::fixed_colla};

RegressionScenario regression_scenario(const ExperimentConfig& config) {
  RegressionScenario r = config.regression;
  r.num_agents = config.num_agents;
  return r;
}

ClassificationScenario classification_scenario(const ExperimentConfig& config) {
  ClassificationScenario s = config.classification;
  s.num_agents = config.num_agents;
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

nlohmann::ordered_json matrix_rows(const Matrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::ordered_json traffic_json(const TrafficReport& traffic, const std::string& digest) {
  auto counters = [](const TrafficCounters& c) {
    return nlohmann::ordered_json{{"messages_sent", c.messages_sent},     {"messages_received", c.messages_received},
                                  {"bytes_sent", c.bytes_sent},           {"bytes_received", c.bytes_received},
                                  {"broadcast", c.broadcast_messages},    {"unicast", c.unicast_messages}};
  };
  nlohmann::ordered_json j;
  j["config_digest"] = digest;
  j["total"] = counters(traffic.global_totals());
  nlohmann::ordered_json agents = nlohmann::ordered_json::array();
  for (const auto& c : traffic.totals()) agents.push_back(counters(c));
  j["per_agent"] = agents;
  nlohmann::ordered_json rounds = nlohmann::ordered_json::array();
  for (const auto& [round, _] : traffic.per_round()) {
    auto entry = counters(traffic.round_totals(round));
    entry["round"] = round;
    rounds.push_back(entry);
  }
  j["per_round"] = rounds;
  return j;
}

GroupAssignment feature_groups(const ExperimentConfig& config) {
  if (!config.group_of.empty()) return GroupAssignment(config.group_of);
  const std::size_t n = config.num_agents;
  const std::size_t g = config.classification.num_groups;
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i * g / n);
  return GroupAssignment(labels);
}

}  // namespace

std::shared_ptr<const Task> make_task(const ExperimentConfig& config) {
  if (config.task == TaskKind::regression) return std::make_shared<LineRegression>(config.loss_reduction);
  const auto& s = config.classification;
  return std::make_shared<SoftmaxClassifier>(s.feature_dim, s.classes_per_group(), config.l2_reg, config.loss_reduction);
}

SeedData prepare_seed(const ExperimentConfig& config, std::uint64_t seed) {
  SeedData out;
  out.seed = seed;
  if (config.task == TaskKind::regression) {
    RegressionData d = gen_regression(regression_scenario(config), seed);
    out.train = std::move(d.datasets);
    out.truth = std::move(d.truth);
    out.groups = std::move(d.groups);
    out.ground_truth = std::move(d.ground_truth);
  } else if (config.features_file) {
    FeatureFileOptions opts;
    opts.feature_dim = config.classification.feature_dim;
    opts.num_agents = config.num_agents;
    out.train = load_features(*config.features_file, opts);
    out.test = config.test_features_file ? load_features(*config.test_features_file, opts) : out.train;
    out.heldin = out.test;
    out.groups = feature_groups(config);
    out.ground_truth = ground_truth_graph(out.groups);
  } else {
    ClassificationData d = gen_classification(classification_scenario(config), seed);
    out.train = std::move(d.datasets);
    out.test = std::move(d.test);
    out.heldin = std::move(d.heldin);
    out.groups = std::move(d.groups);
    out.ground_truth = std::move(d.ground_truth);
  }
  if (out.train.size() != config.num_agents) {
    throw SchemaError("data has " + std::to_string(out.train.size()) + " agents, config expects " +
                      std::to_string(config.num_agents));
  }
  out.dataset_digest = dataset_digest(out.train);
  return out;
}

std::vector<LocalSurrogate> fit_surrogates(const Task& task, const std::vector<TaskDataset>& datasets,
                                           const FitSettings& fit, std::size_t workers) {
  std::vector<LocalSurrogate> out(datasets.size());
  parallel_for(datasets.size(), workers, [&](std::size_t i) { out[i] = fit_local(task, datasets[i], fit); });
  return out;
}

std::unique_ptr<Transport> make_transport(const ExperimentConfig& config) {
  if (config.transport == TransportKind::socket) return std::make_unique<SocketTransport>(config.num_agents);
  return std::make_unique<InMemoryBus>(config.num_agents);
}

std::unique_ptr<GraphLearner> make_learner(const ExperimentConfig& config, Method method, const SeedData& data,
                                           const UnrolledModel* importance) {
  switch (method) {
    case Method::no_colla:
      return nullptr;
    case Method::original_gl:
      return std::make_unique<DualAscentLearner>(config.lambda1, config.lambda2, config.dual);
    case Method::unrolled_gl:
      if (importance == nullptr) throw DependencyError("unrolled-gl needs a trained importance diagonal (P file)");
      return std::make_unique<UnrolledLearner>(*importance);
    case Method::fixed_colla:
      return std::make_unique<FixedLearner>(data.ground_truth);
  }
  throw ConfigError("unknown method");
}

MethodRun run_method(const ExperimentConfig& config, const Task& task, const SeedData& data,
                     const std::vector<LocalSurrogate>& surrogates, Method method,
                     const UnrolledModel* importance) {
  const std::size_t n = config.num_agents;
  std::vector<AgentState> agents;
  agents.reserve(n);
  for (std::size_t i = 0; i < n; ++i) agents.push_back(initialize_agent(static_cast<AgentId>(i), n, surrogates[i]));

  auto learner = make_learner(config, method, data, importance);
  std::unique_ptr<Transport> transport;
  if (method != Method::no_colla) transport = make_transport(config);

  ExperimentSettings settings;
  settings.method = method;
  settings.lambda2 = config.lambda2;
  settings.rounds = config.rounds;
  settings.refresh_interval = config.refresh_interval;
  settings.workers = config.workers;

  MethodRun run;
  run.trajectory = run_experiment(settings, std::move(agents), transport.get(), learner.get());
  run.traffic = transport ? transport->traffic() : TrafficReport(n);

  MetricsReport& r = run.report;
  r.method = method;
  r.seed = data.seed;
  r.config_digest = config.digest();
  r.dataset_digest = data.dataset_digest;
  const ParamSet& final_thetas = run.trajectory.final_thetas();
  if (task.is_classification()) {
    r.acc = mean_accuracy(task, final_thetas, data.test);
  } else if (data.truth) {
    r.l_reg = l_reg(final_thetas, *data.truth);
  }
  if (method != Method::no_colla) {
    if (auto w = run.trajectory.final_graph()) r.gmse = gmse(*w, data.ground_truth);
  }
  return run;
}

std::vector<TrainingScenario> training_scenarios(const ExperimentConfig& config) {
  if (config.train_seeds.empty()) throw ConfigError("training needs at least one train seed");
  auto task = make_task(config);
  std::vector<TrainingScenario> out(config.train_seeds.size());
  parallel_for(out.size(), config.workers, [&](std::size_t s) {
    SeedData data = prepare_seed(config, config.train_seeds[s]);
    out[s].surrogates = fit_surrogates(*task, data.train, config.fit);
    if (task->is_classification()) {
      out[s].heldin = std::move(data.heldin);
    } else {
      out[s].truth = std::move(data.truth);
    }
  });
  return out;
}

TrainingResult train_unrolled(const ExperimentConfig& config, std::ostream* log) {
  config.validate();
  auto scenarios = training_scenarios(config);
  const ImportanceDiag initial = initial_importance(scenarios, config.gamma, config.p_init_scale);

  PipelineSettings ps;
  ps.lambda2 = config.lambda2;
  ps.unroll_steps = config.unroll_steps;
  ps.refresh_interval = config.refresh_interval;
  ps.refreshes = config.full_horizon ? config.rounds / config.refresh_interval : 1;
  ps.workers = config.workers;
  std::shared_ptr<const Task> task = make_task(config);
  CollaborationPipeline pipeline(std::move(scenarios), ps, task->is_classification() ? task : nullptr);

  TrainerSettings ts;
  ts.learning_rate = config.train_learning_rate;
  ts.epochs = config.train_epochs;
  ts.mode = config.gradient_mode;
  ts.fd_relative_step = config.fd_relative_step;
  ts.gamma = config.gamma;
  ts.workers = config.workers;
  TrainingResult result = train_importance(pipeline, UnrolledModel{initial, config.unroll_steps}, ts);
  if (log != nullptr) {
    for (std::size_t e = 0; e < result.losses.size(); ++e) {
      *log << "epoch " << e << " loss " << result.losses[e] << (e == result.best_epoch ? "  (best)" : "") << "\n";
    }
  }
  return result;
}

ComparisonTable compare_methods(const ExperimentConfig& config, const UnrolledModel& importance,
                                std::vector<std::vector<MethodRun>>* runs) {
  config.validate();
  if (!(config.lambda1 > 0.0)) throw ConfigError("original-gl needs lambda1 > 0");
  auto task = make_task(config);
  const auto& seeds = config.seeds;

  // Sockets bound to fixed ports cannot be shared by concurrent seeds.
  const bool fixed_ports = config.transport == TransportKind::socket && BindAddress::from_environment().port != 0;
  const std::size_t seed_workers = fixed_ports ? 1 : std::min(config.workers, seeds.size());
  ExperimentConfig inner = config;
  inner.workers = seed_workers > 1 ? 1 : config.workers;

  std::vector<std::vector<MethodRun>> per_seed(seeds.size());
  parallel_for(seeds.size(), std::max<std::size_t>(seed_workers, 1), [&](std::size_t s) {
    std::vector<MethodRun>& out = per_seed[s];
    std::optional<SeedData> data;
    std::vector<LocalSurrogate> surrogates;
    std::optional<std::string> setup_failure;
    try {
      data = prepare_seed(inner, seeds[s]);
      surrogates = fit_surrogates(*task, data->train, inner.fit, inner.workers);
    } catch (const Error& e) {
      setup_failure = e.what();
    }
    for (Method m : kAllMethods) {
      MethodRun run;
      run.report.method = m;
      run.report.seed = seeds[s];
      run.report.config_digest = config.digest();
      if (setup_failure) {
        run.report.failure = *setup_failure;
      } else {
        run.report.dataset_digest = data->dataset_digest;
        try {
          run = run_method(inner, *task, *data, surrogates, m, &importance);
        } catch (const Error& e) {
          run.report.failure = e.what();
        }
      }
      out.push_back(std::move(run));
    }
  });

  ComparisonTable table;
  table.task = to_string(config.task);
  table.config_digest = config.digest();
  table.seeds = seeds;
  for (const auto& seed_runs : per_seed) {
    const std::string& digest = seed_runs.front().report.dataset_digest;
    for (const auto& run : seed_runs) {
      if (run.report.dataset_digest != digest) {
        throw ExperimentError("methods saw different datasets for seed " + std::to_string(run.report.seed), 0);
      }
      table.runs.push_back(run.report);
    }
  }
  table.summary = summarize_runs(table.runs);
  if (runs != nullptr) *runs = std::move(per_seed);
  return table;
}

// --------------------------------------------------------------- commands

void cmd_generate(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const std::string digest = config.digest();
  for (std::uint64_t seed : config.seeds) {
    const fs::path dir = fs::path(config.out_dir) / "scenario" / seed_dir(seed);
    ensure_dir(dir);
    SeedData data = prepare_seed(config, seed);
    write_features((dir / "data.csv").string(), data.train);
    if (!data.test.empty()) write_features((dir / "test.csv").string(), data.test);
    if (!data.heldin.empty()) write_features((dir / "heldin.csv").string(), data.heldin);

    nlohmann::ordered_json truth;
    truth["config_digest"] = digest;
    truth["groups"] = data.groups.labels();
    truth["W"] = matrix_rows(data.ground_truth.matrix());
    truth["theta"] = data.truth ? matrix_rows(data.truth->matrix().transpose()) : nlohmann::ordered_json(nullptr);
    write_text(dir / "ground_truth.json", truth.dump(2) + "\n");

    nlohmann::ordered_json scenario;
    scenario["config_digest"] = digest;
    scenario["seed"] = seed;
    scenario["dataset_digest"] = data.dataset_digest;
    scenario["num_agents"] = data.train.size();
    nlohmann::ordered_json sizes = nlohmann::ordered_json::array();
    for (const auto& d : data.train) sizes.push_back(d.size());
    scenario["samples"] = sizes;
    scenario["config"] = nlohmann::ordered_json::parse(config.canonical_json());
    write_text(dir / "scenario.json", scenario.dump(2) + "\n");
    log << "seed " << seed << ": " << data.train.size() << " agents, dataset " << data.dataset_digest << " -> "
        << dir.string() << "\n";
  }
}

std::string cmd_train(const ExperimentConfig& config, std::ostream& log) {
  TrainingResult result = train_unrolled(config, &log);
  ensure_dir(config.out_dir);
  const fs::path path = fs::path(config.out_dir) / "importance.json";
  save_importance(path.string(), ImportanceFile{result.model, result.losses, result.best_epoch});
  log << "best epoch " << result.best_epoch << ", P written to " << path.string() << "\n";
  return path.string();
}

std::vector<RunArtifacts> cmd_run(const ExperimentConfig& config, const std::optional<std::string>& p_file,
                                  std::ostream& log) {
  config.validate();
  std::optional<UnrolledModel> importance;
  if (config.method == Method::unrolled_gl) {
    if (!p_file) throw DependencyError("unrolled-gl needs --p-file (run `collab train` first)");
    auto task = make_task(config);
    importance = load_importance(*p_file, task->param_dim()).model;
  }
  auto task = make_task(config);
  const std::string digest = config.digest();

  std::vector<RunArtifacts> out;
  for (std::uint64_t seed : config.seeds) {
    SeedData data = prepare_seed(config, seed);
    auto surrogates = fit_surrogates(*task, data.train, config.fit, config.workers);
    MethodRun run = run_method(config, *task, data, surrogates, config.method, importance ? &*importance : nullptr);

    const fs::path dir = fs::path(config.out_dir) / "run" / to_string(config.method) / seed_dir(seed);
    ensure_dir(dir);
    nlohmann::ordered_json snapshot;
    snapshot["config_digest"] = digest;
    snapshot["seed"] = seed;
    snapshot["p_file"] = p_file && importance ? nlohmann::ordered_json(*p_file) : nlohmann::ordered_json(nullptr);
    snapshot["p_file_digest"] =
        p_file && importance ? nlohmann::ordered_json(digest_hex(read_text(*p_file))) : nlohmann::ordered_json(nullptr);
    snapshot["config"] = nlohmann::ordered_json::parse(config.canonical_json());
    write_text(dir / "config.json", snapshot.dump(2) + "\n");
    write_trajectory((dir / "trajectory.jsonl").string(), run.trajectory, digest);
    write_text(dir / "metrics.json", render_report_json(run.report));
    write_text(dir / "traffic.json", traffic_json(run.traffic, digest).dump(2) + "\n");

    log << to_string(config.method) << " seed " << seed;
    if (run.report.l_reg) log << "  L_reg " << *run.report.l_reg;
    if (run.report.acc) log << "  ACC " << *run.report.acc;
    if (run.report.gmse) log << "  GMSE " << *run.report.gmse;
    log << "  messages " << run.traffic.global_totals().messages_sent << "\n";
    out.push_back(RunArtifacts{dir.string(), run.report});
  }
  return out;
}

ComparisonTable cmd_compare(const ExperimentConfig& config, const std::optional<std::string>& p_file,
                            std::ostream& log) {
  config.validate();
  auto task = make_task(config);
  ensure_dir(config.out_dir);
  UnrolledModel importance;
  if (p_file) {
    importance = load_importance(*p_file, task->param_dim()).model;
  } else {
    log << "no P file given; training on seeds";
    for (auto s : config.train_seeds) log << " " << s;
    log << "\n";
    TrainingResult trained = train_unrolled(config, &log);
    importance = trained.model;
    save_importance((fs::path(config.out_dir) / "importance.json").string(),
                    ImportanceFile{trained.model, trained.losses, trained.best_epoch});
  }

  std::vector<std::vector<MethodRun>> runs;
  ComparisonTable table = compare_methods(config, importance, &runs);
  write_text(fs::path(config.out_dir) / "comparison.json", render_json(table));
  const std::string text = render_text(table);
  write_text(fs::path(config.out_dir) / "comparison.txt", text);
  log << text;

  // Plot data for the first seed: θ trajectories (first two coordinates) and
  // learned W rows at each refresh.
  std::ostringstream theta_csv;
  std::ostringstream graph_csv;
  theta_csv.precision(17);
  graph_csv.precision(17);
  theta_csv << "x,y,series\n";
  graph_csv << "x,y,series\n";
  if (!runs.empty()) {
    for (const MethodRun& run : runs.front()) {
      if (run.report.failure) continue;
      const std::string method = to_string(run.report.method);
      const Trajectory& tr = run.trajectory;
      const std::size_t coords = std::min<std::size_t>(tr.initial.dim(), 2);
      auto emit = [&](std::size_t x, const ParamSet& p) {
        for (std::size_t i = 0; i < p.num_agents(); ++i) {
          for (std::size_t m = 0; m < coords; ++m) {
            theta_csv << x << "," << p.theta(i)(static_cast<Eigen::Index>(m)) << "," << method << ":agent" << i
                      << ":theta" << m << "\n";
          }
        }
      };
      emit(0, tr.initial);
      for (const auto& rec : tr.rounds) {
        emit(rec.round + 1, rec.thetas);
        if (!rec.graph) continue;
        const Matrix& w = rec.graph->matrix();
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          for (Eigen::Index j = 0; j < w.cols(); ++j) {
            graph_csv << j << "," << w(i, j) << "," << method << ":t" << rec.round << ":row" << i << "\n";
          }
        }
      }
    }
  }
  write_text(fs::path(config.out_dir) / "plot_theta.csv", theta_csv.str());
  write_text(fs::path(config.out_dir) / "plot_graph.csv", graph_csv.str());
  return table;
}

}  // namespace collab
