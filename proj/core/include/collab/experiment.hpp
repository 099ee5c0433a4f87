#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "collab/collaboration.hpp"
#include "collab/config.hpp"
#include "collab/metrics.hpp"
#include "collab/trainer.hpp"
#include "collab/transport.hpp"

namespace collab {

/// Everything a seed's runs share: local data, evaluation data and the truth.
struct SeedData {
  std::uint64_t seed = 0;
  std::vector<TaskDataset> train;
  std::vector<TaskDataset> test;    // classification
  std::vector<TaskDataset> heldin;  // classification
  std::optional<ParamSet> truth;    // regression
  GroupAssignment groups;
  CollabMatrix ground_truth;
  std::string dataset_digest;
};

std::shared_ptr<const Task> make_task(const ExperimentConfig& config);

/// Generates (or loads, for feature files) the data for one seed.
SeedData prepare_seed(const ExperimentConfig& config, std::uint64_t seed);

std::vector<LocalSurrogate> fit_surrogates(const Task& task, const std::vector<TaskDataset>& datasets,
                                           const FitSettings& fit, std::size_t workers = 1);

std::unique_ptr<Transport> make_transport(const ExperimentConfig& config);

/// Learner for a method; `importance` is required for unrolled-gl.
std::unique_ptr<GraphLearner> make_learner(const ExperimentConfig& config, Method method, const SeedData& data,
                                           const UnrolledModel* importance);

struct MethodRun {
  MetricsReport report;
  Trajectory trajectory;
  TrafficReport traffic;
};

/// One method on one seed. Errors propagate; compare_methods turns them into
/// failure markers.
MethodRun run_method(const ExperimentConfig& config, const Task& task, const SeedData& data,
                     const std::vector<LocalSurrogate>& surrogates, Method method,
                     const UnrolledModel* importance);

/// Pretraining scenarios drawn from config.train_seeds.
std::vector<TrainingScenario> training_scenarios(const ExperimentConfig& config);

/// Trains P on the training seeds; per-epoch losses go to `log` when given.
TrainingResult train_unrolled(const ExperimentConfig& config, std::ostream* log = nullptr);

/// Runs all four methods on identical data for every seed in config.seeds.
/// Seeds run concurrently on config.workers threads. When `runs` is given it
/// receives the per-seed runs in method order.
ComparisonTable compare_methods(const ExperimentConfig& config, const UnrolledModel& importance,
                                std::vector<std::vector<MethodRun>>* runs = nullptr);

// --------------------------------------------------------------- commands

/// Writes <out>/scenario/seed_<s>/{data.csv, [test.csv, heldin.csv], ground_truth.json, scenario.json}.
void cmd_generate(const ExperimentConfig& config, std::ostream& log);

/// Trains P and writes <out>/importance.json. Returns the file path.
std::string cmd_train(const ExperimentConfig& config, std::ostream& log);

struct RunArtifacts {
  std::string directory;
  MetricsReport report;
};

/// Runs config.method for every seed, writing config.json, trajectory.jsonl,
/// metrics.json and traffic.json under <out>/run/<method>/seed_<s>/.
/// unrolled-gl needs `p_file`; without it a DependencyError is thrown.
std::vector<RunArtifacts> cmd_run(const ExperimentConfig& config, const std::optional<std::string>& p_file,
                                  std::ostream& log);

/// compare_methods plus comparison.json, comparison.txt and plot CSVs. P is
/// read from `p_file` or trained first (and saved) when none is given.
ComparisonTable cmd_compare(const ExperimentConfig& config, const std::optional<std::string>& p_file,
                            std::ostream& log);

}  // namespace collab
