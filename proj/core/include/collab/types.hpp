#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace collab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using AgentId = std::uint32_t;

/// An agent's local model parameters. Length M is fixed per experiment.
using ParamVector = Vector;

/// Parameters of every agent, stored column-wise (column j = agent j), M×N.
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(std::size_t num_agents, std::size_t dim);
  explicit ParamSet(Matrix columns);

  /// Builds from per-agent vectors; throws DimensionError on ragged input.
  static ParamSet from_vectors(const std::vector<ParamVector>& thetas);

  std::size_t num_agents() const { return static_cast<std::size_t>(columns_.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(columns_.rows()); }

  auto theta(std::size_t agent) const { return columns_.col(static_cast<Eigen::Index>(agent)); }
  auto theta(std::size_t agent) { return columns_.col(static_cast<Eigen::Index>(agent)); }

  const Matrix& matrix() const { return columns_; }
  Matrix& matrix() { return columns_; }

  bool all_finite() const { return columns_.allFinite(); }

 private:
  Matrix columns_;
};

/// One agent's outgoing edge weights w_i (length N, w_ii = 0, simplex-valued after a solve).
struct CollabWeights {
  AgentId agent = 0;
  Vector weights;

  std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
  /// Indices j with weights[j] > 0, ascending.
  std::vector<AgentId> partners() const;
  static CollabWeights uniform(AgentId agent, std::size_t num_agents);
};

/// W ∈ R^{N×N}; row i holds agent i's outgoing weights.
class CollabMatrix {
 public:
  CollabMatrix() = default;
  explicit CollabMatrix(std::size_t num_agents);
  explicit CollabMatrix(Matrix rows);

  static CollabMatrix from_rows(const std::vector<CollabWeights>& rows);

  std::size_t num_agents() const { return static_cast<std::size_t>(rows_.rows()); }
  CollabWeights row(std::size_t agent) const;
  void set_row(const CollabWeights& w);
  double operator()(std::size_t i, std::size_t j) const {
    return rows_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  const Matrix& matrix() const { return rows_; }

  friend bool operator==(const CollabMatrix& a, const CollabMatrix& b) {
    return a.rows_.rows() == b.rows_.rows() && a.rows_.cols() == b.rows_.cols() &&
           a.rows_ == b.rows_;
  }

 private:
  Matrix rows_;
};

/// D_i ∈ R^{M×N}; entry (m, j) = (θ_im − θ_jm)².
struct DistanceMatrix {
  AgentId owner = 0;
  Matrix entries;
};

/// Diagonal of the trainable importance matrix P. Every entry stays ≥ floor.
class ImportanceDiag {
 public:
  ImportanceDiag() = default;
  ImportanceDiag(Vector diag, double floor);

  const Vector& diag() const { return diag_; }
  double floor() const { return floor_; }
  std::size_t dim() const { return static_cast<std::size_t>(diag_.size()); }

  /// Copy with entries clamped from below at the floor.
  ImportanceDiag projected(const Vector& candidate) const;

 private:
  Vector diag_;
  double floor_ = 1e-6;
};

/// Task-group membership; every group must have at least two members.
class GroupAssignment {
 public:
  GroupAssignment() = default;
  explicit GroupAssignment(std::vector<int> group_of);

  std::size_t num_agents() const { return group_of_.size(); }
  int group_of(std::size_t agent) const { return group_of_.at(agent); }
  const std::vector<int>& labels() const { return group_of_; }
  std::map<int, std::vector<AgentId>> members() const;

 private:
  std::vector<int> group_of_;
};

/// Collaboration hyperparameters.
struct Hyperparams {
  double lambda1 = 3.0;
  double lambda2 = 0.1;
  std::size_t unroll_steps = 10;  // K
  std::size_t rounds = 20;        // T1
  std::size_t refresh_interval = 10;  // T2
  double dual_stepsize = 0.0;     // <= 0 selects the default 2·λ1/(N−1)
  double tolerance = 1e-8;

  void validate() const;
  bool is_refresh_round(std::size_t t) const { return t % refresh_interval == 0; }
};

/// True iff w[i] == 0 (within tol), all entries ≥ −tol, and |Σw − 1| ≤ tol.
/// Throws DimensionError when w.size() differs from expected_n.
bool validate_collab_weights(const CollabWeights& w, double tol, std::size_t expected_n);
bool validate_collab_weights(const CollabWeights& w, double tol);

/// Per-coordinate squared differences against agent i. Throws
/// IncompleteBroadcastError when any column is missing (non-finite).
DistanceMatrix distance_matrix(const ParamSet& all_params, AgentId owner);

/// d_ij = ‖θ_i − θ_j‖², the column sums of distance_matrix.
Vector pairwise_sq_dists(const ParamSet& all_params, AgentId owner);

}  // namespace collab
