#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "collab/types.hpp"

namespace collab {

struct DualAscentSettings {
  /// Dual stepsize p; a non-positive value selects 2·λ1/(N−1).
  double stepsize = 0.0;
  std::size_t max_iters = 50000;
  double tol = 1e-8;
};

/// Solves min λ1‖w‖² + λ2·dᵀw over the simplex with w_ii = 0 by dual ascent
/// on the sum constraint. The primal step is w = ReLU(−(λ2·d + z)/(2λ1)).
///
/// Throws DegenerateObjectiveError for λ1 <= 0 and ConvergenceError (carrying
/// |1ᵀw − 1|) if the tolerance is not met within max_iters.
CollabWeights dual_ascent_solve(const Vector& distances, AgentId owner, double lambda1, double lambda2,
                                const DualAscentSettings& settings = {});

/// The dual stepsize actually used for N agents.
double effective_dual_stepsize(const DualAscentSettings& settings, double lambda1, std::size_t num_agents);

struct UnrolledModel {
  ImportanceDiag importance;
  std::size_t steps = 10;  // K

  void validate() const;
};

struct UnrolledOutput {
  CollabWeights weights;
  /// The K-step iterate summed to zero and uniform weights were returned.
  bool degenerate = false;
};

/// K steps of w ← ReLU(Proj(w − DᵀPDw)) from uniform weights, then ℓ1-normalized.
/// Proj recenters over the N−1 non-self coordinates and re-zeros w_ii.
UnrolledOutput unrolled_forward(const DistanceMatrix& distances, const UnrolledModel& model);

/// w_ij = 1/(|group(i)| − 1) within a group, 0 elsewhere.
CollabMatrix ground_truth_graph(const GroupAssignment& groups);

/// Strategy used by an agent during a graph refresh.
class GraphLearner {
 public:
  virtual ~GraphLearner() = default;
  virtual std::string name() const = 0;
  virtual CollabWeights learn(const ParamSet& all_params, AgentId owner) const = 0;
};

class DualAscentLearner final : public GraphLearner {
 public:
  DualAscentLearner(double lambda1, double lambda2, DualAscentSettings settings = {})
      : lambda1_(lambda1), lambda2_(lambda2), settings_(settings) {}
  std::string name() const override { return "original-gl"; }
  CollabWeights learn(const ParamSet& all_params, AgentId owner) const override;

 private:
  double lambda1_;
  double lambda2_;
  DualAscentSettings settings_;
};

class UnrolledLearner final : public GraphLearner {
 public:
  explicit UnrolledLearner(UnrolledModel model);
  std::string name() const override { return "unrolled-gl"; }
  CollabWeights learn(const ParamSet& all_params, AgentId owner) const override;
  const UnrolledModel& model() const { return model_; }

 private:
  UnrolledModel model_;
};

/// Returns a predetermined graph row regardless of the parameters.
class FixedLearner final : public GraphLearner {
 public:
  explicit FixedLearner(CollabMatrix graph) : graph_(std::move(graph)) {}
  std::string name() const override { return "fixed-colla"; }
  CollabWeights learn(const ParamSet& all_params, AgentId owner) const override;

 private:
  CollabMatrix graph_;
};

// ----------------------------------------------------------------- P files

/// Trained importance diagonal plus the metadata persisted next to it.
struct ImportanceFile {
  static constexpr int kFormatVersion = 1;
  UnrolledModel model;
  std::vector<double> loss_trajectory;
  std::size_t best_epoch = 0;
};

void save_importance(const std::string& path, const ImportanceFile& file);
/// Throws IoError on unreadable input and SchemaError on a bad version or
/// when expected_dim (if nonzero) differs from the stored M.
ImportanceFile load_importance(const std::string& path, std::size_t expected_dim = 0);

}  // namespace collab
