#include "collab/types.hpp"

#include <cmath>
#include <string>

#include "collab/errors.hpp"

namespace collab {

ParamSet::ParamSet(std::size_t num_agents, std::size_t dim)
    : columns_(Matrix::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(num_agents))) {}

ParamSet::ParamSet(Matrix columns) : columns_(std::move(columns)) {}

ParamSet ParamSet::from_vectors(const std::vector<ParamVector>& thetas) {
  if (thetas.empty()) return ParamSet{};
  const auto dim = thetas.front().size();
  ParamSet out(thetas.size(), static_cast<std::size_t>(dim));
  for (std::size_t j = 0; j < thetas.size(); ++j) {
    if (thetas[j].size() != dim) {
      throw DimensionError("parameter vector " + std::to_string(j) + " has length " +
                           std::to_string(thetas[j].size()) + ", expected " + std::to_string(dim));
    }
    out.theta(j) = thetas[j];
  }
  return out;
}

std::vector<AgentId> CollabWeights::partners() const {
  std::vector<AgentId> out;
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    if (weights[j] > 0.0) out.push_back(static_cast<AgentId>(j));
  }
  return out;
}

CollabWeights CollabWeights::uniform(AgentId agent, std::size_t num_agents) {
  if (num_agents < 2) throw ConfigError("uniform weights need at least two agents");
  CollabWeights w{agent, Vector::Constant(static_cast<Eigen::Index>(num_agents),
                                          1.0 / static_cast<double>(num_agents - 1))};
  w.weights[agent] = 0.0;
  return w;
}

CollabMatrix::CollabMatrix(std::size_t num_agents)
    : rows_(Matrix::Zero(static_cast<Eigen::Index>(num_agents), static_cast<Eigen::Index>(num_agents))) {}

CollabMatrix::CollabMatrix(Matrix rows) : rows_(std::move(rows)) {
  if (rows_.rows() != rows_.cols()) throw DimensionError("collaboration matrix must be square");
}

CollabMatrix CollabMatrix::from_rows(const std::vector<CollabWeights>& rows) {
  CollabMatrix out(rows.size());
  for (const auto& r : rows) out.set_row(r);
  return out;
}

CollabWeights CollabMatrix::row(std::size_t agent) const {
  return CollabWeights{static_cast<AgentId>(agent), rows_.row(static_cast<Eigen::Index>(agent)).transpose()};
}

void CollabMatrix::set_row(const CollabWeights& w) {
  if (w.size() != num_agents() || w.agent >= num_agents()) {
    throw DimensionError("weight row does not fit a " + std::to_string(num_agents()) + "-agent matrix");
  }
  rows_.row(w.agent) = w.weights.transpose();
}

ImportanceDiag::ImportanceDiag(Vector diag, double floor) : diag_(std::move(diag)), floor_(floor) {
  if (!(floor_ > 0.0)) throw ConfigError("importance floor gamma must be positive");
  for (Eigen::Index m = 0; m < diag_.size(); ++m) {
    if (!std::isfinite(diag_[m]) || diag_[m] < floor_) {
      throw ConfigError("importance entry " + std::to_string(m) + " is below the floor gamma");
    }
  }
}

ImportanceDiag ImportanceDiag::projected(const Vector& candidate) const {
  if (candidate.size() != diag_.size()) throw DimensionError("importance update has wrong length");
  return ImportanceDiag(candidate.cwiseMax(floor_), floor_);
}

GroupAssignment::GroupAssignment(std::vector<int> group_of) : group_of_(std::move(group_of)) {
  for (const auto& [label, agents] : members()) {
    if (agents.size() < 2) {
      throw ConfigError("group " + std::to_string(label) + " has a single member; ground truth is undefined");
    }
  }
}

std::map<int, std::vector<AgentId>> GroupAssignment::members() const {
  std::map<int, std::vector<AgentId>> out;
  for (std::size_t i = 0; i < group_of_.size(); ++i) out[group_of_[i]].push_back(static_cast<AgentId>(i));
  return out;
}

void Hyperparams::validate() const {
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("lambda1 and lambda2 must be non-negative");
  if (unroll_steps < 1) throw ConfigError("unroll steps K must be >= 1");
  if (rounds < 1) throw ConfigError("rounds T1 must be >= 1");
  if (refresh_interval < 1) throw ConfigError("refresh interval T2 must be >= 1");
  if (!(tolerance > 0.0)) throw ConfigError("tolerance must be positive");
}

bool validate_collab_weights(const CollabWeights& w, double tol, std::size_t expected_n) {
  if (w.size() != expected_n) {
    throw DimensionError("weight vector has length " + std::to_string(w.size()) + ", expected " +
                         std::to_string(expected_n));
  }
  return validate_collab_weights(w, tol);
}

bool validate_collab_weights(const CollabWeights& w, double tol) {
  if (w.size() < 2 || w.agent >= w.size()) return false;
  if (!w.weights.allFinite()) return false;
  if (std::abs(w.weights[w.agent]) > tol) return false;
  if (w.weights.minCoeff() < -tol) return false;
  return std::abs(w.weights.sum() - 1.0) <= tol;
}

namespace {

void check_owner(const ParamSet& all_params, AgentId owner) {
  if (owner >= all_params.num_agents()) {
    throw DimensionError("agent " + std::to_string(owner) + " is not among " +
                         std::to_string(all_params.num_agents()) + " agents");
  }
  for (std::size_t j = 0; j < all_params.num_agents(); ++j) {
    if (!all_params.theta(j).allFinite()) {
      throw IncompleteBroadcastError("parameters of agent " + std::to_string(j) + " are missing");
    }
  }
}

}  // namespace

DistanceMatrix distance_matrix(const ParamSet& all_params, AgentId owner) {
  check_owner(all_params, owner);
  const Matrix& theta = all_params.matrix();
  Matrix diff = theta.colwise() - theta.col(owner);
  return DistanceMatrix{owner, diff.array().square().matrix()};
}

Vector pairwise_sq_dists(const ParamSet& all_params, AgentId owner) {
  check_owner(all_params, owner);
  const Matrix& theta = all_params.matrix();
  return (theta.colwise() - theta.col(owner)).colwise().squaredNorm().transpose();
}

}  // namespace collab
