#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "collab/tasks.hpp"
#include "collab/types.hpp"

namespace collab {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Agents sample noisy points from a segment of one of several lines.
struct RegressionScenario {
  std::vector<Line> lines{{2.0, 1.0}, {-1.0, 3.0}};
  std::size_t num_agents = 20;
  /// Each group's agents partition [x_lo, x_hi] into equal segments.
  double x_lo = -5.0;
  double x_hi = 5.0;
  double noise_sigma = 1.0;
  std::size_t samples_per_agent = 100;

  void validate() const;
};

struct RegressionData {
  std::vector<TaskDataset> datasets;
  ParamSet truth;  // (k_i, b_i) per agent
  GroupAssignment groups;
  CollabMatrix ground_truth;
  std::vector<std::pair<double, double>> segments;
};

/// Pure in (scenario, seed). Group membership and segment layout are shuffled
/// by the seed; x is uniform on the segment and y = kx + b + N(0, σ²).
RegressionData gen_regression(const RegressionScenario& scenario, std::uint64_t seed);

/// Grouped, non-IID classification over class-conditional Gaussian clusters.
struct ClassificationScenario {
  std::size_t num_agents = 20;
  std::size_t feature_dim = 20;
  std::size_t num_classes = 10;
  std::size_t num_groups = 2;  // group g owns classes [g·C/G, (g+1)·C/G)
  std::size_t samples_per_agent = 250;
  std::size_t sample_jitter = 25;  // per-agent count uniform in samples ± jitter
  double dirichlet_concentration = 0.5;
  double cluster_radius = 4.0;
  double cluster_sigma = 1.0;
  /// Balanced per-class sample counts for each agent's evaluation and held-in sets.
  std::size_t eval_per_class = 50;

  std::size_t classes_per_group() const { return num_classes / num_groups; }
  void validate() const;
};

struct ClassificationData {
  std::vector<TaskDataset> datasets;  // non-IID local training data
  std::vector<TaskDataset> test;      // balanced over the agent's group classes
  std::vector<TaskDataset> heldin;    // balanced, drawn independently of test
  std::vector<Vector> mixtures;       // per-agent class mixture
  GroupAssignment groups;
  CollabMatrix ground_truth;
  Matrix class_means;  // num_classes × feature_dim
};

/// Labels are re-indexed 0..C/G−1 within each group.
ClassificationData gen_classification(const ClassificationScenario& scenario, std::uint64_t seed);

/// Row format: agent_id,label,x_1,...,x_d. Blank lines and lines starting
/// with '#' are skipped. For regression files the label column holds y.
struct FeatureFileOptions {
  std::size_t feature_dim = 20;
  /// 0 infers N = max id + 1; otherwise ids ≥ N are schema errors.
  std::size_t num_agents = 0;
  bool integer_labels = true;
};

/// Throws ParseError (with line number), SchemaError or EmptyDatasetError.
std::vector<TaskDataset> load_features(const std::string& path, const FeatureFileOptions& options = {});
void write_features(const std::string& path, const std::vector<TaskDataset>& datasets);

}  // namespace collab
