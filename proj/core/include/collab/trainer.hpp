#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "collab/graph_learning.hpp"
#include "collab/tasks.hpp"
#include "collab/types.hpp"

namespace collab {

/// End-to-end evaluator mapping an importance diagonal to a supervision loss.
class SupervisionPipeline {
 public:
  virtual ~SupervisionPipeline() = default;
  virtual std::size_t dim() const = 0;
  virtual double loss(const ImportanceDiag& importance) const = 0;
  /// Loss plus its exact gradient with respect to the diagonal entries.
  virtual double loss_and_gradient(const ImportanceDiag& importance, Vector& gradient) const = 0;
};

/// One pretraining scenario: fitted local surrogates plus the ground truth
/// the supervision loss needs.
struct TrainingScenario {
  std::vector<LocalSurrogate> surrogates;
  /// Regression: true parameters per agent; loss = (1/N)Σ‖θ_i − θ*_i‖².
  std::optional<ParamSet> truth;
  /// Classification: held-in data per agent; loss = Σ_i L_i(θ_i; held-in_i).
  std::vector<TaskDataset> heldin;
};

struct PipelineSettings {
  double lambda2 = 0.1;
  std::size_t unroll_steps = 10;      // K
  std::size_t refresh_interval = 10;  // T2: parameter updates after each refresh
  std::size_t refreshes = 1;          // 1 = one refresh window; T1/T2 = full horizon
  std::size_t workers = 1;
};

/// Unrolled graph refresh followed by closed-form parameter updates, for a
/// batch of scenarios; the loss is the scenario mean. Runs the same arithmetic
/// as run_experiment with an UnrolledLearner.
class CollaborationPipeline final : public SupervisionPipeline {
 public:
  /// `task` is required when scenarios supervise with held-in data.
  CollaborationPipeline(std::vector<TrainingScenario> scenarios, PipelineSettings settings,
                        std::shared_ptr<const Task> task = nullptr);

  std::size_t dim() const override { return dim_; }
  double loss(const ImportanceDiag& importance) const override;
  double loss_and_gradient(const ImportanceDiag& importance, Vector& gradient) const override;

  /// Final parameters of one scenario under the given importance.
  ParamSet final_params(const ImportanceDiag& importance, std::size_t scenario) const;
  const std::vector<TrainingScenario>& scenarios() const { return scenarios_; }
  const PipelineSettings& settings() const { return settings_; }

 private:
  double scenario_loss(const ImportanceDiag& importance, std::size_t s, Vector* gradient) const;

  std::vector<TrainingScenario> scenarios_;
  PipelineSettings settings_;
  std::shared_ptr<const Task> task_;
  std::size_t dim_ = 0;
};

enum class GradientMode { analytic, finite_difference };

struct TrainerSettings {
  /// Adam step size relative to the mean of the initial diagonal.
  double learning_rate = 0.05;
  std::size_t epochs = 30;
  GradientMode mode = GradientMode::finite_difference;
  /// Central-difference step h_m = fd_relative_step · p_m.
  double fd_relative_step = 1e-4;
  double gamma = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::size_t workers = 1;
};

struct TrainingResult {
  UnrolledModel model;             // best-seen P
  std::vector<double> losses;      // losses[e] = loss of the iterate before step e; last entry after the final step
  std::size_t best_epoch = 0;
};

/// Central differences over every diagonal entry; each probe is a full pipeline run.
Vector finite_difference_gradient(const SupervisionPipeline& pipeline, const ImportanceDiag& importance,
                                  double relative_step, std::size_t workers = 1);

/// Projected Adam on P with the floor γ enforced after every step. Returns the
/// best-seen diagonal. Throws TrainingError when the loss becomes non-finite.
TrainingResult train_importance(const SupervisionPipeline& pipeline, const UnrolledModel& initial,
                                const TrainerSettings& settings);

/// Scale-aware starting diagonal: p_m ∝ 1 / E[(D w_uniform)_m²] over the
/// scenarios' initial parameters, times `scale`.
ImportanceDiag initial_importance(const std::vector<TrainingScenario>& scenarios, double gamma, double scale = 1.0);

}  // namespace collab
