#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "collab/config.hpp"
#include "collab/errors.hpp"
#include "collab/experiment.hpp"

using namespace collab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig quick_regression(const std::string& out) {
  auto c = ExperimentConfig::defaults_for(TaskKind::regression);
  c.seeds = {1, 2};
  c.train_epochs = 20;
  c.out_dir = (fs::temp_directory_path() / "collab_harness" / out).string();
  fs::remove_all(c.out_dir);
  return c;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("defaults follow the reproduction contract") {
  const auto r = ExperimentConfig::defaults_for(TaskKind::regression);
  CHECK(r.lambda2 == 0.1);
  CHECK(r.lambda1 == 3.0);
  CHECK(r.unroll_steps == 10);
  CHECK(r.refresh_interval == 10);
  CHECK(r.rounds == 20);
  CHECK(r.num_agents == 20);
  const auto c = ExperimentConfig::defaults_for(TaskKind::classification);
  CHECK(c.lambda1 == 0.05);
  CHECK(c.refresh_interval == 200);
  CHECK(c.rounds == 400);
  CHECK(c.lambda2 == 0.1);
}

TEST_CASE("config parsing and validation") {
  auto c = ExperimentConfig::from_json_text(R"({"task": "classification", "refresh_interval": 50})");
  CHECK(c.task == TaskKind::classification);
  CHECK(c.rounds == 100);
  CHECK(c.lambda1 == 0.05);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"lambda3": 1})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(R"({"lambda2": "big"})"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("{not json"), ConfigError);

  auto bad = ExperimentConfig::defaults_for(TaskKind::regression);
  bad.num_agents = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ExperimentConfig::defaults_for(TaskKind::regression);
  bad.train_seeds = {3};
  bad.seeds = {1, 3};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config digest ignores run location but not settings") {
  auto a = ExperimentConfig::defaults_for(TaskKind::regression);
  auto b = a;
  b.workers = 8;
  b.out_dir = "/elsewhere";
  CHECK(a.digest() == b.digest());
  b.lambda2 = 0.2;
  CHECK(a.digest() != b.digest());
  CHECK(a.describe().find("lambda2") != std::string::npos);
  const auto round_trip = ExperimentConfig::from_json_text(a.canonical_json());
  CHECK(round_trip.digest() == a.digest());
}

TEST_CASE("generate is deterministic") {
  auto c = quick_regression("generate");
  std::ostringstream log;
  cmd_generate(c, log);
  const auto dir = fs::path(c.out_dir) / "scenario" / "seed_1";
  const std::string data = slurp(dir / "data.csv");
  const std::string truth = slurp(dir / "ground_truth.json");
  const std::string scenario = slurp(dir / "scenario.json");
  CHECK_FALSE(data.empty());
  cmd_generate(c, log);
  CHECK(slurp(dir / "data.csv") == data);
  CHECK(slurp(dir / "ground_truth.json") == truth);
  CHECK(slurp(dir / "scenario.json") == scenario);
  const auto loaded = load_features((dir / "data.csv").string(), FeatureFileOptions{1, 20, false});
  CHECK(loaded.size() == 20);
  CHECK(loaded[0].size() == 100);
}

TEST_CASE("train with zero epochs persists the initial P") {
  auto c = quick_regression("train0");
  c.train_epochs = 0;
  std::ostringstream log;
  const auto path = cmd_train(c, log);
  const auto file = load_importance(path, 2);
  const auto scenarios = training_scenarios(c);
  const auto init = initial_importance(scenarios, c.gamma, c.p_init_scale);
  CHECK(file.model.importance.diag() == init.diag());
  CHECK(file.loss_trajectory.size() == 1);
  CHECK(log.str().find("epoch 0") != std::string::npos);
}

TEST_CASE("run artifacts") {
  auto c = quick_regression("run");
  std::ostringstream log;

  c.method = Method::unrolled_gl;
  CHECK_THROWS_AS(cmd_run(c, std::nullopt, log), DependencyError);

  c.method = Method::no_colla;
  const auto none = cmd_run(c, std::nullopt, log);
  REQUIRE(none.size() == 2);
  const auto traffic = nlohmann::json::parse(slurp(fs::path(none[0].directory) / "traffic.json"));
  CHECK(traffic["total"]["messages_sent"] == 0);
  CHECK(traffic["config_digest"] == c.digest());
  CHECK_FALSE(none[0].report.gmse);

  c.method = Method::fixed_colla;
  const auto fixed = cmd_run(c, std::nullopt, log);
  const auto data = prepare_seed(c, 1);
  const auto tr = read_trajectory((fs::path(fixed[0].directory) / "trajectory.jsonl").string());
  int refreshes = 0;
  for (const auto& r : tr.rounds) {
    if (!r.graph) continue;
    ++refreshes;
    CHECK(*r.graph == data.ground_truth);
  }
  CHECK(refreshes == 2);
  CHECK(*fixed[0].report.gmse == 0.0);

  const std::string metrics = slurp(fs::path(fixed[0].directory) / "metrics.json");
  cmd_run(c, std::nullopt, log);
  CHECK(slurp(fs::path(fixed[0].directory) / "metrics.json") == metrics);
  CHECK(nlohmann::json::parse(metrics)["config_digest"] == c.digest());

  c.method = Method::unrolled_gl;
  const auto p = cmd_train(c, log);
  const auto unrolled = cmd_run(c, p, log);
  CHECK(unrolled[0].report.gmse.has_value());
  const auto snapshot = nlohmann::json::parse(slurp(fs::path(unrolled[0].directory) / "config.json"));
  CHECK(snapshot["p_file"] == p);
}

TEST_CASE("compare shares data across methods and marks failures") {
  auto c = quick_regression("compare");
  const auto trained = train_unrolled(c).model;
  const auto table = compare_methods(c, trained);
  REQUIRE(table.runs.size() == 8);
  for (const auto& r : table.runs) {
    CHECK_FALSE(r.failure);
    CHECK(r.dataset_digest == table.runs[r.seed == 1 ? 0 : 4].dataset_digest);
    if (r.method == Method::no_colla) CHECK_FALSE(r.gmse);
    if (r.method == Method::fixed_colla) CHECK(*r.gmse == 0.0);
  }
  CHECK(table.runs[0].dataset_digest != table.runs[4].dataset_digest);

  // A P of the wrong dimension breaks only the unrolled runs.
  const UnrolledModel wrong{ImportanceDiag(Vector::Constant(3, 1.0), 1e-6), 10};
  const auto partial = compare_methods(c, wrong);
  for (const auto& r : partial.runs) CHECK(r.failure.has_value() == (r.method == Method::unrolled_gl));
  CHECK(partial.summary_for(Method::unrolled_gl).failures == 2);
  CHECK(render_text(partial).find("FAILED") != std::string::npos);
}

TEST_CASE("trained P beats the untrained initialization on held-out seeds") {
  auto c = quick_regression("paired");
  c.seeds = {21, 22, 23, 24, 25};
  const auto scenarios = training_scenarios(c);
  const UnrolledModel untrained{initial_importance(scenarios, c.gamma, c.p_init_scale), c.unroll_steps};
  c.train_epochs = 200;
  const auto trained = train_unrolled(c).model;
  const auto before = compare_methods(c, untrained).summary_for(Method::unrolled_gl);
  const auto after = compare_methods(c, trained).summary_for(Method::unrolled_gl);
  CHECK(after.gmse->mean < before.gmse->mean);
  CHECK(after.l_reg->mean < before.l_reg->mean);
}

TEST_CASE("socket and in-memory transports give identical trajectories") {
  auto c = quick_regression("socket");
  c.seeds = {4};
  const auto data = prepare_seed(c, 4);
  const auto task = make_task(c);
  const auto surrogates = fit_surrogates(*task, data.train, c.fit);
  const auto memory = run_method(c, *task, data, surrogates, Method::original_gl, nullptr);
  c.transport = TransportKind::socket;
  const auto socket = run_method(c, *task, data, surrogates, Method::original_gl, nullptr);
  REQUIRE(memory.trajectory.rounds.size() == socket.trajectory.rounds.size());
  for (std::size_t t = 0; t < memory.trajectory.rounds.size(); ++t) {
    CHECK(memory.trajectory.rounds[t].thetas.matrix() == socket.trajectory.rounds[t].thetas.matrix());
    CHECK(memory.trajectory.rounds[t].messages == socket.trajectory.rounds[t].messages);
  }
  CHECK(memory.traffic.global_totals() == socket.traffic.global_totals());
}

}
