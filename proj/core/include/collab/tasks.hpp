#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "collab/types.hpp"

namespace collab {

/// Local observations X_i (one sample per row) and supervision Y_i.
/// For classification the targets hold integral class labels 0..C−1.
struct TaskDataset {
  Matrix inputs;
  Vector targets;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(inputs.cols()); }
};

enum class LossReduction { mean, sum };

/// Second-order model of a local loss around its minimizer.
struct LocalSurrogate {
  ParamVector alpha;
  Matrix hessian;
  double base_loss = 0.0;
  /// Set when the design was rank-deficient and a pseudo-inverse solution was used.
  bool rank_deficient = false;
  std::size_t iterations = 0;
};

/// A convex local learning problem with analytic derivatives.
class Task {
 public:
  virtual ~Task() = default;

  virtual std::string name() const = 0;
  virtual std::size_t param_dim() const = 0;
  virtual bool is_classification() const = 0;
  virtual void validate(const TaskDataset& data) const = 0;

  virtual double loss(const ParamVector& theta, const TaskDataset& data) const = 0;
  virtual ParamVector gradient(const ParamVector& theta, const TaskDataset& data) const = 0;
  virtual Matrix hessian(const ParamVector& theta, const TaskDataset& data) const = 0;
};

/// Line fit y = kx + b with θ = (k, b) and squared-error loss.
class LineRegression final : public Task {
 public:
  explicit LineRegression(LossReduction reduction = LossReduction::mean) : reduction_(reduction) {}

  std::string name() const override { return "regression"; }
  std::size_t param_dim() const override { return 2; }
  bool is_classification() const override { return false; }
  void validate(const TaskDataset& data) const override;

  double loss(const ParamVector& theta, const TaskDataset& data) const override;
  ParamVector gradient(const ParamVector& theta, const TaskDataset& data) const override;
  Matrix hessian(const ParamVector& theta, const TaskDataset& data) const override;

 private:
  double scale(const TaskDataset& data) const;
  LossReduction reduction_;
};

/// Linear softmax classifier over C classes and d features.
///
/// Parameters are class-major: [w_0 (d entries), b_0, w_1, b_1, ...], so
/// M = C·(d + 1). An optional ridge term (ρ/2)‖θ‖² keeps the minimizer finite
/// on separable data.
class SoftmaxClassifier final : public Task {
 public:
  SoftmaxClassifier(std::size_t features, std::size_t classes, double l2 = 0.0,
                    LossReduction reduction = LossReduction::mean);

  std::string name() const override { return "classification"; }
  std::size_t param_dim() const override { return classes_ * (features_ + 1); }
  bool is_classification() const override { return true; }
  void validate(const TaskDataset& data) const override;

  double loss(const ParamVector& theta, const TaskDataset& data) const override;
  ParamVector gradient(const ParamVector& theta, const TaskDataset& data) const override;
  Matrix hessian(const ParamVector& theta, const TaskDataset& data) const override;

  /// n×C matrix of class probabilities.
  Matrix probabilities(const ParamVector& theta, const TaskDataset& data) const;
  /// Argmax class per sample; ties go to the lowest class index.
  std::vector<int> predict(const ParamVector& theta, const TaskDataset& data) const;

  std::size_t features() const { return features_; }
  std::size_t classes() const { return classes_; }
  double l2() const { return l2_; }

 private:
  Matrix logits(const ParamVector& theta, const TaskDataset& data) const;
  double scale(const TaskDataset& data) const;

  std::size_t features_;
  std::size_t classes_;
  double l2_;
  LossReduction reduction_;
};

enum class FitMethod { newton, gradient_descent };

struct FitSettings {
  std::size_t max_iters = 10000;
  double grad_tol = 1e-6;
  FitMethod method = FitMethod::newton;
  /// Regression only: use the closed-form least-squares solve.
  bool closed_form_regression = true;
};

/// α_i = argmin L_i with H_i = ∇²L_i(α_i). Throws FitError when the gradient
/// tolerance is not reached within the iteration budget.
LocalSurrogate fit_local(const Task& task, const TaskDataset& data, const FitSettings& settings = {});

/// Fraction of argmax-correct predictions. Throws UnsupportedMetricError for
/// non-classification tasks.
double accuracy(const Task& task, const ParamVector& theta, const TaskDataset& data);

}  // namespace collab
