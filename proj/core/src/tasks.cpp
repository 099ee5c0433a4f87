#include "collab/tasks.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "collab/errors.hpp"

namespace collab {

namespace {

void check_theta(const Task& task, const ParamVector& theta) {
  if (static_cast<std::size_t>(theta.size()) != task.param_dim()) {
    throw DimensionError(task.name() + " expects " + std::to_string(task.param_dim()) +
                         " parameters, got " + std::to_string(theta.size()));
  }
}

void check_common(const TaskDataset& data) {
  if (data.size() == 0) throw EmptyDatasetError("dataset is empty");
  if (static_cast<std::size_t>(data.targets.size()) != data.size()) {
    throw DimensionError("inputs and targets differ in length");
  }
}

}  // namespace

// ---------------------------------------------------------------- regression

void LineRegression::validate(const TaskDataset& data) const {
  check_common(data);
  if (data.feature_dim() != 1) throw DimensionError("line regression takes one input feature");
}

double LineRegression::scale(const TaskDataset& data) const {
  return reduction_ == LossReduction::mean ? 1.0 / static_cast<double>(data.size()) : 1.0;
}

double LineRegression::loss(const ParamVector& theta, const TaskDataset& data) const {
  check_theta(*this, theta);
  validate(data);
  const Vector residual = (data.inputs.col(0).array() * theta[0] + theta[1]).matrix() - data.targets;
  return scale(data) * residual.squaredNorm();
}

ParamVector LineRegression::gradient(const ParamVector& theta, const TaskDataset& data) const {
  check_theta(*this, theta);
  validate(data);
  const auto x = data.inputs.col(0).array();
  const Eigen::ArrayXd residual = x * theta[0] + theta[1] - data.targets.array();
  ParamVector g(2);
  g[0] = 2.0 * scale(data) * (residual * x).sum();
  g[1] = 2.0 * scale(data) * residual.sum();
  return g;
}

Matrix LineRegression::hessian(const ParamVector& theta, const TaskDataset& data) const {
  check_theta(*this, theta);
  validate(data);
  const auto x = data.inputs.col(0).array();
  const double s = 2.0 * scale(data);
  Matrix h(2, 2);
  h(0, 0) = s * x.square().sum();
  h(0, 1) = h(1, 0) = s * x.sum();
  h(1, 1) = s * static_cast<double>(data.size());
  return h;
}

// ------------------------------------------------------------ classification

SoftmaxClassifier::SoftmaxClassifier(std::size_t features, std::size_t classes, double l2,
                                     LossReduction reduction)
    : features_(features), classes_(classes), l2_(l2), reduction_(reduction) {
  if (classes_ < 2) throw ConfigError("softmax classifier needs at least two classes");
  if (features_ < 1) throw ConfigError("softmax classifier needs at least one feature");
  if (!(l2_ >= 0.0)) throw ConfigError("ridge strength must be non-negative");
}

void SoftmaxClassifier::validate(const TaskDataset& data) const {
  check_common(data);
  if (data.feature_dim() != features_) {
    throw DimensionError("classifier expects " + std::to_string(features_) + " features, got " +
                         std::to_string(data.feature_dim()));
  }
  for (Eigen::Index s = 0; s < data.targets.size(); ++s) {
    const double y = data.targets[s];
    if (y != std::floor(y) || y < 0 || y >= static_cast<double>(classes_)) {
      throw DimensionError("label " + std::to_string(y) + " outside 0.." + std::to_string(classes_ - 1));
    }
  }
}

double SoftmaxClassifier::scale(const TaskDataset& data) const {
  return reduction_ == LossReduction::mean ? 1.0 / static_cast<double>(data.size()) : 1.0;
}

Matrix SoftmaxClassifier::logits(const ParamVector& theta, const TaskDataset& data) const {
  check_theta(*this, theta);
  validate(data);
  const auto d = static_cast<Eigen::Index>(features_);
  const auto c = static_cast<Eigen::Index>(classes_);
  // Column c of `weights` is class c's block [w_c; b_c].
  const Eigen::Map<const Matrix> weights(theta.data(), d + 1, c);
  return (data.inputs * weights.topRows(d)).rowwise() + weights.row(d);
}

Matrix SoftmaxClassifier::probabilities(const ParamVector& theta, const TaskDataset& data) const {
  Matrix z = logits(theta, data);
  for (Eigen::Index s = 0; s < z.rows(); ++s) {
    const double top = z.row(s).maxCoeff();
    z.row(s) = (z.row(s).array() - top).exp().matrix();
    z.row(s) /= z.row(s).sum();
  }
  return z;
}

std::vector<int> SoftmaxClassifier::predict(const ParamVector& theta, const TaskDataset& data) const {
  const Matrix z = logits(theta, data);
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index s = 0; s < z.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.cols(); ++k) {
      if (z(s, k) > z(s, best)) best = k;
    }
    out[static_cast<std::size_t>(s)] = static_cast<int>(best);
  }
  return out;
}

double SoftmaxClassifier::loss(const ParamVector& theta, const TaskDataset& data) const {
  const Matrix z = logits(theta, data);
  double total = 0.0;
  for (Eigen::Index s = 0; s < z.rows(); ++s) {
    const double top = z.row(s).maxCoeff();
    const double lse = top + std::log((z.row(s).array() - top).exp().sum());
    total += lse - z(s, static_cast<Eigen::Index>(data.targets[s]));
  }
  return scale(data) * total + 0.5 * l2_ * theta.squaredNorm();
}

ParamVector SoftmaxClassifier::gradient(const ParamVector& theta, const TaskDataset& data) const {
  Matrix residual = probabilities(theta, data);
  for (Eigen::Index s = 0; s < residual.rows(); ++s) {
    residual(s, static_cast<Eigen::Index>(data.targets[s])) -= 1.0;
  }
  const auto d = static_cast<Eigen::Index>(features_);
  Matrix blocks(d + 1, residual.cols());
  blocks.topRows(d) = data.inputs.transpose() * residual;
  blocks.row(d) = residual.colwise().sum();
  ParamVector g = Eigen::Map<const Vector>(blocks.data(), blocks.size()) * scale(data);
  g += l2_ * theta;
  return g;
}

Matrix SoftmaxClassifier::hessian(const ParamVector& theta, const TaskDataset& data) const {
  const Matrix p = probabilities(theta, data);
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(features_);
  const auto c = static_cast<Eigen::Index>(classes_);
  const auto block = d + 1;

  Matrix augmented(n, block);
  augmented.leftCols(d) = data.inputs;
  augmented.col(d).setOnes();

  Matrix h = Matrix::Zero(c * block, c * block);
  for (Eigen::Index a = 0; a < c; ++a) {
    for (Eigen::Index b = a; b < c; ++b) {
      Vector coeff = -p.col(a).cwiseProduct(p.col(b));
      if (a == b) coeff += p.col(a);
      const Matrix blk = augmented.transpose() * coeff.asDiagonal() * augmented;
      h.block(a * block, b * block, block, block) = blk;
      if (a != b) h.block(b * block, a * block, block, block) = blk.transpose();
    }
  }
  h *= scale(data);
  h.diagonal().array() += l2_;
  return h;
}

// -------------------------------------------------------------------- fitting

namespace {

LocalSurrogate finish(const Task& task, const TaskDataset& data, ParamVector alpha, bool rank_deficient,
                      std::size_t iterations) {
  LocalSurrogate out;
  out.hessian = task.hessian(alpha, data);
  out.hessian = 0.5 * (out.hessian + out.hessian.transpose());
  out.base_loss = task.loss(alpha, data);
  out.alpha = std::move(alpha);
  out.rank_deficient = rank_deficient;
  out.iterations = iterations;
  return out;
}

LocalSurrogate fit_regression_closed_form(const Task& task, const TaskDataset& data) {
  Matrix design(static_cast<Eigen::Index>(data.size()), 2);
  design.col(0) = data.inputs.col(0);
  design.col(1).setOnes();
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(design);
  ParamVector alpha = cod.solve(data.targets);
  return finish(task, data, std::move(alpha), cod.rank() < 2, 0);
}

LocalSurrogate fit_iterative(const Task& task, const TaskDataset& data, const FitSettings& settings) {
  ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(task.param_dim()));
  double f = task.loss(theta, data);
  double step = 1.0;
  double gnorm = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < settings.max_iters; ++it) {
    const ParamVector g = task.gradient(theta, data);
    gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= settings.grad_tol) return finish(task, data, std::move(theta), false, it);

    ParamVector direction = -g;
    double t = 1.0;
    if (settings.method == FitMethod::newton) {
      Matrix h = task.hessian(theta, data);
      Eigen::LDLT<Matrix> ldlt(h);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 1e-14).all()) {
        ParamVector nd = -ldlt.solve(g);
        if (nd.allFinite() && nd.dot(g) < 0.0) direction = std::move(nd);
      } else {
        h.diagonal().array() += 1e-8 * (1.0 + h.diagonal().cwiseAbs().maxCoeff());
        Eigen::LLT<Matrix> llt(h);
        if (llt.info() == Eigen::Success) {
          ParamVector nd = -llt.solve(g);
          if (nd.allFinite() && nd.dot(g) < 0.0) direction = std::move(nd);
        }
      }
    } else {
      t = step;
    }

    const double slope = direction.dot(g);
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      const ParamVector candidate = theta + t * direction;
      const double fc = task.loss(candidate, data);
      if (std::isfinite(fc) && fc <= f + 1e-4 * t * slope) {
        theta = candidate;
        f = fc;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      // Line search stalled at machine precision; report what we have.
      break;
    }
    if (settings.method == FitMethod::gradient_descent) step = 2.0 * t;
  }
  const ParamVector g = task.gradient(theta, data);
  gnorm = g.lpNorm<Eigen::Infinity>();
  if (gnorm <= settings.grad_tol) return finish(task, data, std::move(theta), false, settings.max_iters);
  throw FitError("local fit did not converge: final gradient inf-norm " + std::to_string(gnorm), gnorm);
}

}  // namespace

LocalSurrogate fit_local(const Task& task, const TaskDataset& data, const FitSettings& settings) {
  task.validate(data);
  if (!task.is_classification() && settings.closed_form_regression) {
    return fit_regression_closed_form(task, data);
  }
  return fit_iterative(task, data, settings);
}

double accuracy(const Task& task, const ParamVector& theta, const TaskDataset& data) {
  const auto* classifier = dynamic_cast<const SoftmaxClassifier*>(&task);
  if (classifier == nullptr) throw UnsupportedMetricError("accuracy is only defined for classification tasks");
  const std::vector<int> predicted = classifier->predict(theta, data);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (predicted[s] == static_cast<int>(data.targets[static_cast<Eigen::Index>(s)])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

}  // namespace collab
