#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "collab/collaboration.hpp"
#include "collab/tasks.hpp"
#include "collab/types.hpp"

namespace collab {

/// L_reg = (1/N) Σ_i [(k̂_i − k_i)² + (b̂_i − b_i)²].
double l_reg(const ParamSet& estimates, const ParamSet& truths);

/// GMSE = (1/N) Σ_i ‖ŵ_i − w_i‖².
double gmse(const CollabMatrix& estimated, const CollabMatrix& truth);

/// Mean over agents of each agent's test accuracy.
double mean_accuracy(const Task& task, const ParamSet& thetas, const std::vector<TaskDataset>& test);

/// Metrics for one (method, seed) run.
struct MetricsReport {
  Method method = Method::no_colla;
  std::uint64_t seed = 0;
  std::optional<double> l_reg;  // regression only
  std::optional<double> acc;    // classification only
  std::optional<double> gmse;   // collaborative methods only
  std::string config_digest;
  std::string dataset_digest;
  std::optional<std::string> failure;
};

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single run
  std::size_t count = 0;
};

struct MethodSummary {
  Method method = Method::no_colla;
  std::optional<MetricSummary> l_reg;
  std::optional<MetricSummary> acc;
  std::optional<MetricSummary> gmse;
  std::size_t failures = 0;
};

/// Table-1-shaped comparison: per-run rows plus per-method aggregates.
struct ComparisonTable {
  std::string task;
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricsReport> runs;
  std::vector<MethodSummary> summary;

  bool single_run() const { return seeds.size() == 1; }
  const MethodSummary& summary_for(Method method) const;
};

MetricSummary summarize(const std::vector<double>& values);
/// Aggregates runs per method in the fixed order no-colla, original-gl, unrolled-gl, fixed-colla.
std::vector<MethodSummary> summarize_runs(const std::vector<MetricsReport>& runs);

/// Machine-readable JSON rendering (stable key order and number formatting).
std::string render_json(const ComparisonTable& table);
/// A single run's report as JSON, the same fields as a row of render_json.
std::string render_report_json(const MetricsReport& report);
/// Aligned plain-text table with mean ± std cells and "-" for absent metrics.
std::string render_text(const ComparisonTable& table);

}  // namespace collab
