#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collab/collaboration.hpp"
#include "collab/data.hpp"
#include "collab/graph_learning.hpp"
#include "collab/tasks.hpp"
#include "collab/trainer.hpp"

namespace collab {

enum class TaskKind { regression, classification };
enum class TransportKind { memory, socket };

std::string to_string(TaskKind kind);
TaskKind parse_task(const std::string& text);
std::string to_string(TransportKind kind);
TransportKind parse_transport(const std::string& text);

/// The full reproduction contract for a run. Read from a flat JSON object;
/// every key is optional and unknown keys are rejected.
///
/// Defaults: λ2 = 0.1; λ1 = 3 (regression) / 0.05 (classification); K = 10;
/// T2 = 10 (regression) / 200 (classification); T1 = 2·T2.
struct ExperimentConfig {
  TaskKind task = TaskKind::regression;
  Method method = Method::unrolled_gl;
  std::size_t num_agents = 20;
  double lambda1 = 3.0;
  double lambda2 = 0.1;
  std::size_t unroll_steps = 10;
  std::size_t rounds = 20;
  std::size_t refresh_interval = 10;
  double gamma = 1e-6;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::uint64_t> train_seeds{1001, 1002, 1003, 1004};
  TransportKind transport = TransportKind::memory;
  std::string out_dir = "collab_out";
  std::size_t workers = 1;

  DualAscentSettings dual;
  FitSettings fit;
  LossReduction loss_reduction = LossReduction::mean;

  // P training.
  std::size_t train_epochs = 40;
  double train_learning_rate = 0.05;
  GradientMode gradient_mode = GradientMode::finite_difference;
  double fd_relative_step = 1e-4;
  bool full_horizon = false;
  double p_init_scale = 0.1;

  RegressionScenario regression;
  ClassificationScenario classification;
  double l2_reg = 1e-2;  // classification ridge

  /// Optional precomputed features (classification only).
  std::optional<std::string> features_file;
  std::optional<std::string> test_features_file;
  std::vector<int> group_of;

  static ExperimentConfig defaults_for(TaskKind task);
  /// Applies a JSON object on top of the task defaults ("task" is read first).
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);

  void validate() const;
  Hyperparams hyperparams() const;
  /// Resolved configuration as JSON; excludes run-location fields (out_dir, workers).
  std::string canonical_json() const;
  std::string digest() const;
  /// Human-readable listing of every effective setting.
  std::string describe() const;
};

/// Applies a JSON object of overrides to an existing config.
void apply_overrides(ExperimentConfig& config, const std::string& json_text);

}  // namespace collab
