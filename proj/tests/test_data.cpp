#include <filesystem>
#include <set>
#include <fstream>

#include <doctest.h>

#include "collab/data.hpp"
#include "collab/digest.hpp"
#include "collab/errors.hpp"
#include "collab/graph_learning.hpp"
#include "collab/tasks.hpp"

using namespace collab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "collab_data_tests";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("regression defaults and determinism") {
  RegressionScenario s;
  const auto a = gen_regression(s, 42);
  const auto b = gen_regression(s, 42);
  REQUIRE(a.datasets.size() == 20);
  for (const auto& d : a.datasets) CHECK(d.size() == 100);
  CHECK(dataset_digest(a.datasets) == dataset_digest(b.datasets));
  CHECK(dataset_digest(a.datasets) != dataset_digest(gen_regression(s, 43).datasets));
  CHECK(a.truth.matrix() == b.truth.matrix());
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(validate_collab_weights(a.ground_truth.row(i), 1e-12, 20));
    const auto& seg = a.segments[i];
    CHECK(seg.second > seg.first);
    CHECK(a.datasets[i].inputs.col(0).minCoeff() >= seg.first);
    CHECK(a.datasets[i].inputs.col(0).maxCoeff() <= seg.second);
  }
  const auto members = a.groups.members();
  CHECK(members.size() == 2);
  CHECK(members.at(0).size() == 10);
}

TEST_CASE("noiseless regression is recovered exactly") {
  RegressionScenario s;
  s.noise_sigma = 0.0;
  const auto data = gen_regression(s, 1);
  LineRegression task;
  for (std::size_t i = 0; i < data.datasets.size(); ++i) {
    const auto fit = fit_local(task, data.datasets[i]);
    CHECK(fit.alpha(0) == doctest::Approx(data.truth.theta(i)(0)).epsilon(1e-9));
    CHECK(fit.alpha(1) == doctest::Approx(data.truth.theta(i)(1)).epsilon(1e-9));
  }
}

TEST_CASE("scenario validation") {
  RegressionScenario s;
  s.noise_sigma = -1.0;
  CHECK_THROWS_AS(gen_regression(s, 1), ConfigError);
  s = RegressionScenario{};
  s.samples_per_agent = 1;
  CHECK_THROWS_AS(gen_regression(s, 1), ConfigError);
  ClassificationScenario c;
  c.dirichlet_concentration = 0.0;
  CHECK_THROWS_AS(gen_classification(c, 1), ConfigError);
}

TEST_CASE("classification scenario shape") {
  ClassificationScenario s;
  const auto d = gen_classification(s, 7);
  REQUIRE(d.datasets.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& ds = d.datasets[i];
    CHECK(ds.feature_dim() == 20);
    CHECK(ds.size() >= 225);
    CHECK(ds.size() <= 275);
    CHECK(ds.targets.minCoeff() >= 0);
    CHECK(ds.targets.maxCoeff() <= 4);
    std::set<int> seen;
    for (Eigen::Index k = 0; k < ds.targets.size(); ++k) seen.insert(static_cast<int>(ds.targets(k)));
    CHECK(seen.size() >= 2);
    CHECK(d.mixtures[i].maxCoeff() < 1.0);
    CHECK(d.test[i].size() == 5 * s.eval_per_class);
  }
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      if (d.groups.group_of(i) != d.groups.group_of(j)) CHECK(d.ground_truth(i, j) == 0.0);
  CHECK(dataset_digest(d.datasets) == dataset_digest(gen_classification(s, 7).datasets));
}

TEST_CASE("pooled group classifier separates the clusters") {
  ClassificationScenario s;
  const auto d = gen_classification(s, 3);
  SoftmaxClassifier task(s.feature_dim, s.classes_per_group(), 1e-3);
  for (int g = 0; g < 2; ++g) {
    TaskDataset pooled;
    TaskDataset held;
    std::vector<const TaskDataset*> train;
    std::vector<const TaskDataset*> test;
    for (std::size_t i = 0; i < 20; ++i) {
      if (d.groups.group_of(i) != g) continue;
      train.push_back(&d.datasets[i]);
      test.push_back(&d.test[i]);
    }
    auto concat = [](const std::vector<const TaskDataset*>& parts) {
      Eigen::Index rows = 0;
      for (auto* p : parts) rows += p->inputs.rows();
      TaskDataset out;
      out.inputs.resize(rows, parts.front()->inputs.cols());
      out.targets.resize(rows);
      Eigen::Index at = 0;
      for (auto* p : parts) {
        out.inputs.middleRows(at, p->inputs.rows()) = p->inputs;
        out.targets.segment(at, p->targets.size()) = p->targets;
        at += p->inputs.rows();
      }
      return out;
    };
    pooled = concat(train);
    held = concat(test);
    const auto fit = fit_local(task, pooled);
    CHECK(accuracy(task, fit.alpha, held) >= 0.95);
  }
}

TEST_CASE("feature files round-trip") {
  ClassificationScenario s;
  s.num_agents = 4;
  const auto d = gen_classification(s, 2);
  const auto path = scratch("roundtrip.csv");
  write_features(path.string(), d.datasets);
  const auto back = load_features(path.string(), FeatureFileOptions{20, 4, true});
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back[i].inputs == d.datasets[i].inputs);
    CHECK(back[i].targets == d.datasets[i].targets);
  }
}

TEST_CASE("feature file errors") {
  const auto short_row = scratch("short.csv");
  std::string row20 = "0,1";
  for (int k = 0; k < 20; ++k) row20 += ",0.5";
  std::string row19 = "1,0";
  for (int k = 0; k < 19; ++k) row19 += ",0.5";
  write_file(short_row, "# header\n" + row20 + "\n\n" + row19 + "\n");
  try {
    load_features(short_row.string());
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
  }

  const auto empty = scratch("empty.csv");
  write_file(empty, "");
  CHECK_THROWS_AS(load_features(empty.string()), EmptyDatasetError);

  const auto unknown = scratch("unknown.csv");
  write_file(unknown, "7" + row20.substr(1) + "\n");
  CHECK_THROWS_AS(load_features(unknown.string(), FeatureFileOptions{20, 4, true}), SchemaError);

  const auto garbage = scratch("garbage.csv");
  write_file(garbage, "0,1,abc\n");
  CHECK_THROWS_AS(load_features(garbage.string(), FeatureFileOptions{1, 0, true}), ParseError);

  CHECK_THROWS_AS(load_features(scratch("absent.csv").string()), IoError);
}

}
