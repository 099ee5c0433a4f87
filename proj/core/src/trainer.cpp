#include "collab/trainer.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "collab/collaboration.hpp"
#include "collab/detail/unrolled_tape.hpp"
#include "collab/errors.hpp"

namespace collab {

CollaborationPipeline::CollaborationPipeline(std::vector<TrainingScenario> scenarios, PipelineSettings settings,
                                             std::shared_ptr<const Task> task)
    : scenarios_(std::move(scenarios)), settings_(settings), task_(std::move(task)) {
  if (scenarios_.empty()) throw ConfigError("training needs at least one scenario");
  if (settings_.unroll_steps < 1 || settings_.refresh_interval < 1 || settings_.refreshes < 1) {
    throw ConfigError("pipeline needs K, T2 and the refresh count to be >= 1");
  }
  dim_ = static_cast<std::size_t>(scenarios_.front().surrogates.at(0).alpha.size());
  for (const auto& sc : scenarios_) {
    const std::size_t n = sc.surrogates.size();
    if (n < 2) throw ConfigError("training scenarios need at least two agents");
    for (const auto& s : sc.surrogates) {
      if (static_cast<std::size_t>(s.alpha.size()) != dim_) throw DimensionError("scenario parameter dimensions differ");
    }
    if (sc.truth) {
      if (sc.truth->num_agents() != n || sc.truth->dim() != dim_) throw DimensionError("ground truth has the wrong shape");
    } else {
      if (sc.heldin.size() != n) throw ConfigError("scenario lacks ground truth and held-in data");
      if (!task_) throw DependencyError("held-in supervision needs the task definition");
    }
  }
}

namespace {

struct RefreshRecord {
  std::vector<DistanceMatrix> distances;
  std::vector<detail::UnrolledTape> tapes;
  std::vector<CollabWeights> weights;
  std::vector<SurrogateSolver> solvers;
  std::vector<ParamSet> states;  // θ before each update and after the last one
};

}  // namespace

double CollaborationPipeline::scenario_loss(const ImportanceDiag& importance, std::size_t s, Vector* gradient) const {
  const TrainingScenario& sc = scenarios_.at(s);
  const std::size_t n = sc.surrogates.size();
  const UnrolledModel model{importance, settings_.unroll_steps};
  const double two_l2 = 2.0 * settings_.lambda2;
  const bool taped = gradient != nullptr;

  ParamSet theta(n, dim_);
  for (std::size_t i = 0; i < n; ++i) theta.theta(i) = sc.surrogates[i].alpha;

  std::vector<RefreshRecord> records;
  records.reserve(taped ? settings_.refreshes : 0);
  for (std::size_t r = 0; r < settings_.refreshes; ++r) {
    RefreshRecord rec;
    for (AgentId i = 0; i < n; ++i) {
      DistanceMatrix d = distance_matrix(theta, i);
      detail::UnrolledTape tape;
      UnrolledOutput out = detail::unrolled_forward_taped(d, model, taped ? &tape : nullptr);
      rec.solvers.emplace_back(sc.surrogates[i], settings_.lambda2, out.weights.weights.sum());
      rec.weights.push_back(std::move(out.weights));
      if (taped) {
        rec.distances.push_back(std::move(d));
        rec.tapes.push_back(std::move(tape));
      }
    }
    if (taped) rec.states.push_back(theta);
    for (std::size_t u = 0; u < settings_.refresh_interval; ++u) {
      ParamSet next(n, dim_);
      for (std::size_t i = 0; i < n; ++i) next.theta(i) = rec.solvers[i].solve(weighted_neighbor_sum(rec.weights[i], theta));
      theta = std::move(next);
      if (taped) rec.states.push_back(theta);
    }
    if (taped) records.push_back(std::move(rec));
  }

  double loss = 0.0;
  Matrix g_theta = Matrix::Zero(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(n));
  if (sc.truth) {
    const Matrix diff = theta.matrix() - sc.truth->matrix();
    loss = diff.squaredNorm() / static_cast<double>(n);
    if (taped) g_theta = 2.0 * diff / static_cast<double>(n);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const ParamVector th = theta.theta(i);
      loss += task_->loss(th, sc.heldin[i]);
      if (taped) g_theta.col(static_cast<Eigen::Index>(i)) = task_->gradient(th, sc.heldin[i]);
    }
  }
  if (!taped) return loss;

  Vector g_importance = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t r = records.size(); r-- > 0;) {
    const RefreshRecord& rec = records[r];
    Matrix g_weights = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t u = settings_.refresh_interval; u-- > 0;) {
      const Matrix& in = rec.states[u].matrix();
      const Matrix& out = rec.states[u + 1].matrix();
      Matrix g_in = Matrix::Zero(g_theta.rows(), g_theta.cols());
      for (std::size_t i = 0; i < n; ++i) {
        if (rec.solvers[i].passthrough()) continue;
        const Vector ui = rec.solvers[i].apply_inverse(g_theta.col(static_cast<Eigen::Index>(i)));
        const Vector& w = rec.weights[i].weights;
        const Vector proj_in = in.transpose() * ui;
        const double proj_out = out.col(static_cast<Eigen::Index>(i)).dot(ui);
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const auto jj = static_cast<Eigen::Index>(j);
          g_in.col(jj) += two_l2 * w[jj] * ui;
          g_weights(static_cast<Eigen::Index>(i), jj) += two_l2 * (proj_in[jj] - proj_out);
        }
      }
      g_theta = std::move(g_in);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const detail::UnrolledGradients ug = detail::unrolled_backward(
          rec.distances[i], model, rec.tapes[i], g_weights.row(static_cast<Eigen::Index>(i)).transpose());
      g_importance += ug.importance;
      if (r == 0) continue;  // the first refresh sees α, which does not depend on P
      const Matrix& th = rec.states[0].matrix();
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n); ++j) {
        if (j == ii) continue;
        const Vector contrib = 2.0 * (th.col(ii) - th.col(j)).cwiseProduct(ug.distances.col(j));
        g_theta.col(ii) += contrib;
        g_theta.col(j) -= contrib;
      }
    }
  }
  *gradient = g_importance;
  return loss;
}

double CollaborationPipeline::loss(const ImportanceDiag& importance) const {
  if (importance.dim() != dim_) throw DimensionError("importance diagonal length differs from M");
  std::vector<double> losses(scenarios_.size());
  parallel_for(scenarios_.size(), settings_.workers,
               [&](std::size_t s) { losses[s] = scenario_loss(importance, s, nullptr); });
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(scenarios_.size());
}

double CollaborationPipeline::loss_and_gradient(const ImportanceDiag& importance, Vector& gradient) const {
  if (importance.dim() != dim_) throw DimensionError("importance diagonal length differs from M");
  std::vector<double> losses(scenarios_.size());
  std::vector<Vector> grads(scenarios_.size());
  parallel_for(scenarios_.size(), settings_.workers,
               [&](std::size_t s) { losses[s] = scenario_loss(importance, s, &grads[s]); });
  double total = 0.0;
  gradient = Vector::Zero(static_cast<Eigen::Index>(dim_));
  for (std::size_t s = 0; s < scenarios_.size(); ++s) {
    total += losses[s];
    gradient += grads[s];
  }
  const double count = static_cast<double>(scenarios_.size());
  gradient /= count;
  return total / count;
}

ParamSet CollaborationPipeline::final_params(const ImportanceDiag& importance, std::size_t scenario) const {
  const TrainingScenario& sc = scenarios_.at(scenario);
  const std::size_t n = sc.surrogates.size();
  const UnrolledModel model{importance, settings_.unroll_steps};
  ParamSet theta(n, dim_);
  for (std::size_t i = 0; i < n; ++i) theta.theta(i) = sc.surrogates[i].alpha;
  for (std::size_t r = 0; r < settings_.refreshes; ++r) {
    std::vector<CollabWeights> weights;
    std::vector<SurrogateSolver> solvers;
    for (AgentId i = 0; i < n; ++i) {
      weights.push_back(unrolled_forward(distance_matrix(theta, i), model).weights);
      solvers.emplace_back(sc.surrogates[i], settings_.lambda2, weights.back().weights.sum());
    }
    for (std::size_t u = 0; u < settings_.refresh_interval; ++u) {
      ParamSet next(n, dim_);
      for (std::size_t i = 0; i < n; ++i) next.theta(i) = solvers[i].solve(weighted_neighbor_sum(weights[i], theta));
      theta = std::move(next);
    }
  }
  return theta;
}

namespace {

ImportanceDiag probe(const ImportanceDiag& base, Eigen::Index m, double value) {
  Vector d = base.diag();
  d[m] = value;
  return ImportanceDiag(d, std::min(base.floor(), value));
}

}  // namespace

Vector finite_difference_gradient(const SupervisionPipeline& pipeline, const ImportanceDiag& importance,
                                  double relative_step, std::size_t workers) {
  if (!(relative_step > 0.0)) throw ConfigError("finite-difference step must be positive");
  const auto m = static_cast<Eigen::Index>(importance.dim());
  Vector grad(m);
  parallel_for(static_cast<std::size_t>(m), workers, [&](std::size_t k) {
    const auto idx = static_cast<Eigen::Index>(k);
    const double p = importance.diag()[idx];
    const double h = relative_step * p;
    const double up = pipeline.loss(probe(importance, idx, p + h));
    const double down = pipeline.loss(probe(importance, idx, p - h));
    grad[idx] = (up - down) / (2.0 * h);
  });
  return grad;
}

TrainingResult train_importance(const SupervisionPipeline& pipeline, const UnrolledModel& initial,
                                const TrainerSettings& settings) {
  initial.validate();
  if (!(settings.learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (initial.importance.dim() != pipeline.dim()) throw DimensionError("initial P has the wrong length");

  const double gamma = settings.gamma;
  ImportanceDiag current = ImportanceDiag(initial.importance.diag().cwiseMax(gamma), gamma);
  const double step = settings.learning_rate * current.diag().mean();
  Vector first = Vector::Zero(current.diag().size());
  Vector second = Vector::Zero(current.diag().size());

  TrainingResult result;
  result.model = UnrolledModel{current, initial.steps};
  double best = std::numeric_limits<double>::infinity();

  auto consider = [&](double loss, std::size_t epoch) {
    if (!std::isfinite(loss)) {
      throw TrainingError("supervision loss is not finite at epoch " + std::to_string(epoch), epoch);
    }
    result.losses.push_back(loss);
    if (loss < best) {
      best = loss;
      result.best_epoch = epoch;
      result.model.importance = current;
    }
  };

  for (std::size_t epoch = 0; epoch < settings.epochs; ++epoch) {
    Vector grad;
    double loss = 0.0;
    if (settings.mode == GradientMode::analytic) {
      loss = pipeline.loss_and_gradient(current, grad);
    } else {
      loss = pipeline.loss(current);
      grad = finite_difference_gradient(pipeline, current, settings.fd_relative_step, settings.workers);
    }
    consider(loss, epoch);
    if (!grad.allFinite()) throw TrainingError("gradient is not finite at epoch " + std::to_string(epoch), epoch);

    const double t = static_cast<double>(epoch + 1);
    first = settings.beta1 * first + (1.0 - settings.beta1) * grad;
    second = settings.beta2 * second + (1.0 - settings.beta2) * grad.cwiseAbs2();
    const Vector m_hat = first / (1.0 - std::pow(settings.beta1, t));
    const Vector v_hat = second / (1.0 - std::pow(settings.beta2, t));
    const Vector update = m_hat.array() / (v_hat.array().sqrt() + 1e-300);
    const Vector candidate = current.diag() - step * update.unaryExpr([](double x) { return std::isfinite(x) ? x : 0.0; });
    current = current.projected(candidate);
  }
  if (settings.epochs > 0) consider(pipeline.loss(current), settings.epochs);
  else consider(pipeline.loss(current), 0);
  return result;
}

ImportanceDiag initial_importance(const std::vector<TrainingScenario>& scenarios, double gamma, double scale) {
  if (scenarios.empty()) throw ConfigError("no scenarios to initialize P from");
  const auto m = scenarios.front().surrogates.at(0).alpha.size();
  Vector acc = Vector::Zero(m);
  double count = 0.0;
  double others = 1.0;
  for (const auto& sc : scenarios) {
    const std::size_t n = sc.surrogates.size();
    ParamSet theta(n, static_cast<std::size_t>(m));
    for (std::size_t i = 0; i < n; ++i) theta.theta(i) = sc.surrogates[i].alpha;
    for (AgentId i = 0; i < n; ++i) {
      const DistanceMatrix d = distance_matrix(theta, i);
      const Vector w = CollabWeights::uniform(i, n).weights;
      const Vector dw = d.entries * w;
      acc += dw.cwiseAbs2();
      count += 1.0;
    }
    others = static_cast<double>(n - 1);
  }
  acc /= count;
  Vector diag(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    // (DᵀPDw)_j ≈ Σ_m p_m (Dw)_m²; aim for a first-step shift of scale·w_j.
    const double denom = acc[k] * others * static_cast<double>(m);
    diag[k] = denom > 0.0 ? scale / denom : 1.0;
  }
  return ImportanceDiag(diag.cwiseMax(gamma), gamma);
}

}  // namespace collab
