#include "collab/graph_learning.hpp"

#include <algorithm>
#include <limits>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "collab/detail/unrolled_tape.hpp"
#include "collab/errors.hpp"

namespace collab {

double effective_dual_stepsize(const DualAscentSettings& settings, double lambda1, std::size_t num_agents) {
  if (settings.stepsize > 0.0) return settings.stepsize;
  // g(z) = 1ᵀw(z) has slope −|active|/(2λ1); this step contracts for every active-set size.
  return 2.0 * lambda1 / static_cast<double>(num_agents > 1 ? num_agents - 1 : 1);
}

CollabWeights dual_ascent_solve(const Vector& distances, AgentId owner, double lambda1, double lambda2,
                                const DualAscentSettings& settings) {
  const auto n = static_cast<std::size_t>(distances.size());
  if (n < 2) throw DimensionError("dual ascent needs at least two agents");
  if (owner >= n) throw DimensionError("owner index outside the distance vector");
  if (!(lambda1 > 0.0)) throw DegenerateObjectiveError("lambda1 must be positive for dual-ascent graph learning");
  if (!(lambda2 >= 0.0)) throw ConfigError("lambda2 must be non-negative");
  if (!(settings.tol > 0.0) || settings.max_iters < 1) throw ConfigError("invalid dual-ascent settings");
  if (!distances.allFinite()) throw IncompleteBroadcastError("distance vector has non-finite entries");

  const double step = effective_dual_stepsize(settings, lambda1, n);
  const Vector scaled = lambda2 * distances;
  CollabWeights w = CollabWeights::uniform(owner, n);
  // Start where the closest partner alone carries unit weight, so 1ᵀw ≥ 1 and
  // the default step approaches the root from above without overshooting.
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j != owner) nearest = std::min(nearest, scaled[static_cast<Eigen::Index>(j)]);
  }
  double z = -nearest - 2.0 * lambda1;
  double diff = w.weights.sum() - 1.0;
  bool converged = false;
  for (std::size_t it = 0; it < settings.max_iters; ++it) {
    w.weights = (-(scaled.array() + z) / (2.0 * lambda1)).max(0.0).matrix();
    w.weights[owner] = 0.0;
    diff = w.weights.sum() - 1.0;
    if (std::abs(diff) <= settings.tol) {
      converged = true;
      break;
    }
    z += step * diff;
  }
  if (!converged) {
    throw ConvergenceError("dual ascent did not converge: |1'w - 1| = " + std::to_string(std::abs(diff)),
                           std::abs(diff));
  }
  w.weights /= w.weights.sum();
  w.weights[owner] = 0.0;
  return w;
}

void UnrolledModel::validate() const {
  if (steps < 1) throw ConfigError("unrolling steps K must be >= 1");
  if (importance.dim() == 0) throw ConfigError("importance diagonal is empty");
}

namespace detail {

UnrolledOutput unrolled_forward_taped(const DistanceMatrix& distances, const UnrolledModel& model,
                                      UnrolledTape* tape) {
  model.validate();
  const Matrix& d = distances.entries;
  const auto n = static_cast<std::size_t>(d.cols());
  const AgentId owner = distances.owner;
  if (n < 2) throw DimensionError("unrolled learner needs at least two agents");
  if (owner >= n) throw DimensionError("owner index outside the distance matrix");
  if (static_cast<std::size_t>(d.rows()) != model.importance.dim()) {
    throw DimensionError("distance matrix has " + std::to_string(d.rows()) + " rows but P has " +
                         std::to_string(model.importance.dim()) + " entries");
  }
  const Vector& p = model.importance.diag();
  const double others = static_cast<double>(n - 1);

  Vector w = CollabWeights::uniform(owner, n).weights;
  if (tape != nullptr) {
    tape->iterates.assign(1, w);
    tape->preactivation.clear();
  }
  for (std::size_t k = 0; k < model.steps; ++k) {
    const Vector dw = d * w;
    Vector v = w - d.transpose() * p.cwiseProduct(dw);
    v[owner] = 0.0;
    const double shift = (v.sum() - 1.0) / others;
    v.array() -= shift;
    v[owner] = 0.0;
    w = v.cwiseMax(0.0);
    if (tape != nullptr) {
      tape->preactivation.push_back(v);
      tape->iterates.push_back(w);
    }
  }

  UnrolledOutput out;
  const double norm = w.sum();
  if (tape != nullptr) tape->norm = norm;
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    out.weights = CollabWeights::uniform(owner, n);
    out.degenerate = true;
  } else {
    out.weights = CollabWeights{owner, w / norm};
  }
  if (tape != nullptr) tape->degenerate = out.degenerate;
  return out;
}

UnrolledGradients unrolled_backward(const DistanceMatrix& distances, const UnrolledModel& model,
                                    const UnrolledTape& tape, const Vector& grad_weights) {
  const Matrix& d = distances.entries;
  const Vector& p = model.importance.diag();
  const AgentId owner = distances.owner;
  const auto n = d.cols();
  UnrolledGradients out{Vector::Zero(p.size()), Matrix::Zero(d.rows(), d.cols())};
  if (tape.degenerate) return out;

  const Vector& final_w = tape.iterates.back();
  // Through w = w^K / ‖w^K‖₁.
  Vector g = (grad_weights.array() - grad_weights.dot(final_w) / tape.norm).matrix() / tape.norm;

  const double inv_others = 1.0 / static_cast<double>(n - 1);
  for (std::size_t k = model.steps; k-- > 0;) {
    const Vector& v = tape.preactivation[k];
    const Vector& w_prev = tape.iterates[k];
    Vector gv = (v.array() > 0.0).select(g, 0.0);
    gv[owner] = 0.0;
    Vector ga = gv.array() - gv.sum() * inv_others;
    ga[owner] = 0.0;

    const Vector d_ga = d * ga;
    const Vector d_w = d * w_prev;
    out.importance -= d_ga.cwiseProduct(d_w);
    out.distances -= p.cwiseProduct(d_w) * ga.transpose() + p.cwiseProduct(d_ga) * w_prev.transpose();
    g = ga - d.transpose() * p.cwiseProduct(d_ga);
  }
  return out;
}

}  // namespace detail

UnrolledOutput unrolled_forward(const DistanceMatrix& distances, const UnrolledModel& model) {
  return detail::unrolled_forward_taped(distances, model, nullptr);
}

CollabMatrix ground_truth_graph(const GroupAssignment& groups) {
  const std::size_t n = groups.num_agents();
  CollabMatrix out(n);
  for (const auto& [label, agents] : groups.members()) {
    if (agents.size() < 2) throw ConfigError("group " + std::to_string(label) + " is a singleton");
    const double share = 1.0 / static_cast<double>(agents.size() - 1);
    for (AgentId i : agents) {
      CollabWeights row{i, Vector::Zero(static_cast<Eigen::Index>(n))};
      for (AgentId j : agents) {
        if (j != i) row.weights[j] = share;
      }
      out.set_row(row);
    }
  }
  return out;
}

CollabWeights DualAscentLearner::learn(const ParamSet& all_params, AgentId owner) const {
  return dual_ascent_solve(pairwise_sq_dists(all_params, owner), owner, lambda1_, lambda2_, settings_);
}

UnrolledLearner::UnrolledLearner(UnrolledModel model) : model_(std::move(model)) { model_.validate(); }

CollabWeights UnrolledLearner::learn(const ParamSet& all_params, AgentId owner) const {
  return unrolled_forward(distance_matrix(all_params, owner), model_).weights;
}

CollabWeights FixedLearner::learn(const ParamSet& all_params, AgentId owner) const {
  if (all_params.num_agents() != graph_.num_agents()) {
    throw DimensionError("fixed graph size does not match the number of agents");
  }
  return graph_.row(owner);
}

// ----------------------------------------------------------------- P files

void save_importance(const std::string& path, const ImportanceFile& file) {
  const Vector& diag = file.model.importance.diag();
  nlohmann::ordered_json j;
  j["format_version"] = ImportanceFile::kFormatVersion;
  j["M"] = diag.size();
  j["gamma"] = file.model.importance.floor();
  j["K"] = file.model.steps;
  j["diag"] = std::vector<double>(diag.data(), diag.data() + diag.size());
  j["best_epoch"] = file.best_epoch;
  j["loss_trajectory"] = file.loss_trajectory;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write importance file " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing importance file " + path);
}

ImportanceFile load_importance(const std::string& path, std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read importance file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("importance file " + path + " is not valid JSON: " + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != ImportanceFile::kFormatVersion) {
      throw SchemaError("unsupported importance file version in " + path);
    }
    const auto dim = j.at("M").get<std::size_t>();
    const auto diag = j.at("diag").get<std::vector<double>>();
    if (diag.size() != dim) throw SchemaError("importance file " + path + " declares M but lists a different count");
    if (expected_dim != 0 && dim != expected_dim) {
      throw SchemaError("importance file " + path + " has M=" + std::to_string(dim) + ", experiment needs " +
                        std::to_string(expected_dim));
    }
    ImportanceFile out;
    out.model.importance =
        ImportanceDiag(Eigen::Map<const Vector>(diag.data(), static_cast<Eigen::Index>(diag.size())),
                       j.at("gamma").get<double>());
    out.model.steps = j.at("K").get<std::size_t>();
    out.model.validate();
    if (j.contains("loss_trajectory")) out.loss_trajectory = j["loss_trajectory"].get<std::vector<double>>();
    if (j.contains("best_epoch")) out.best_epoch = j["best_epoch"].get<std::size_t>();
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("importance file " + path + " is missing fields: " + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError("importance file " + path + " is invalid: " + e.what());
  }
}

}  // namespace collab
