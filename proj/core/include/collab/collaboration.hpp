#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>

#include "collab/graph_learning.hpp"
#include "collab/tasks.hpp"
#include "collab/transport.hpp"
#include "collab/types.hpp"

namespace collab {

/// Factorized (H + 2λ2‖w‖₁ I) for repeated closed-form updates under fixed weights.
class SurrogateSolver {
 public:
  SurrogateSolver(const LocalSurrogate& surrogate, double lambda2, double weight_sum);

  /// θ = (H + 2λ2‖w‖₁ I)⁻¹ (Hα + 2λ2·neighbor_sum), neighbor_sum = Σ_j w_ij θ_j.
  ParamVector solve(const Vector& neighbor_sum) const;
  /// (H + 2λ2‖w‖₁ I)⁻¹ v, used by reverse-mode training.
  Vector apply_inverse(const Vector& v) const;

  /// The system was singular and a 1e−10 ridge was added.
  bool regularized() const { return regularized_; }
  /// No collaboration term: solve() returns α.
  bool passthrough() const { return passthrough_; }

 private:
  ParamVector alpha_;
  Vector h_alpha_;
  double lambda2_;
  Eigen::LLT<Matrix> llt_;
  bool regularized_ = false;
  bool passthrough_ = false;
};

/// Σ_j w_j θ_j over j with w_j > 0, accumulated in ascending j.
Vector weighted_neighbor_sum(const CollabWeights& weights, const ParamSet& params);

struct ParamUpdate {
  ParamVector theta;
  bool regularized = false;
};

struct AgentState {
  AgentId id = 0;
  LocalSurrogate surrogate;
  ParamVector theta;
  CollabWeights weights;
  std::vector<AgentId> partners;
  std::size_t round = 0;
  /// Last parameters received from each agent; used when a message goes missing.
  std::map<AgentId, ParamVector> last_known;
  std::size_t staleness_events = 0;
  std::size_t regularization_events = 0;
  /// Factorization cached for the current weights and λ2.
  std::shared_ptr<const SurrogateSolver> solver;
  double solver_lambda2 = -1.0;

  /// Replaces the weights and partner set and drops the cached solver.
  void set_weights(CollabWeights w);
  const SurrogateSolver& solver_for(double lambda2);
};

/// θ ← argmin L_i with uniform initial weights over the other agents.
AgentState initialize_agent(AgentId id, std::size_t num_agents, const Task& task, const TaskDataset& data,
                            const FitSettings& fit = {});
AgentState initialize_agent(AgentId id, std::size_t num_agents, LocalSurrogate surrogate);

/// Closed-form minimizer of the quadratic surrogate plus λ2 Σ_j w_ij‖θ − θ_j‖².
/// Throws IncompleteBroadcastError when a partner's parameters are missing.
ParamUpdate update_params(const AgentState& state, const std::map<AgentId, ParamVector>& neighbor_params,
                          double lambda2);

struct RoundPlan {
  std::size_t round = 0;
  Phase phase = Phase::graph_refresh;

  static RoundPlan for_round(std::size_t t, std::size_t refresh_interval) {
    return RoundPlan{t, t % refresh_interval == 0 ? Phase::graph_refresh : Phase::neighbor_exchange};
  }
};

/// Sending half of a round: broadcast at a refresh, otherwise send θ to the
/// agents that listed this agent as a partner.
void publish_round(const AgentState& state, Transport& transport, const RoundPlan& plan);

/// Receiving half of a round: gather, (re)learn weights at a refresh, update θ,
/// advance the round counter.
AgentState complete_round(AgentState state, Transport& transport, double lambda2, const GraphLearner& learner,
                          const RoundPlan& plan);

/// publish_round followed by complete_round. With the in-memory bus this
/// blocks until the other agents have published for the same round.
AgentState agent_round(AgentState state, Transport& transport, double lambda2, const GraphLearner& learner,
                       const RoundPlan& plan);

enum class Method { no_colla, original_gl, unrolled_gl, fixed_colla };

std::string to_string(Method method);
Method parse_method(const std::string& text);

struct RoundRecord {
  std::size_t round = 0;
  Phase phase = Phase::graph_refresh;
  /// θ^{(t+1)} for every agent after this round.
  ParamSet thetas;
  /// W as learned at this round (refresh rounds only).
  std::optional<CollabMatrix> graph;
  std::uint64_t messages = 0;
  std::uint64_t broadcast_messages = 0;
  std::uint64_t unicast_messages = 0;
  std::uint64_t bytes = 0;
};

struct Trajectory {
  ParamSet initial;
  std::vector<RoundRecord> rounds;
  std::size_t staleness_events = 0;
  std::size_t regularization_events = 0;

  const ParamSet& final_thetas() const { return rounds.empty() ? initial : rounds.back().thetas; }
  /// Most recently learned W, if any refresh happened.
  std::optional<CollabMatrix> final_graph() const;
};

struct ExperimentSettings {
  Method method = Method::original_gl;
  double lambda2 = 0.1;
  std::size_t rounds = 20;            // T1
  std::size_t refresh_interval = 10;  // T2
  std::size_t workers = 1;
};

/// Runs T1 synchronous rounds with a barrier between them. The learner is
/// ignored for no-colla, which never communicates.
Trajectory run_experiment(const ExperimentSettings& settings, std::vector<AgentState> agents, Transport* transport,
                          const GraphLearner* learner);

/// Line-delimited JSON, one record per round plus a leading header record.
void write_trajectory(const std::string& path, const Trajectory& trajectory, const std::string& config_digest);
Trajectory read_trajectory(const std::string& path);

/// Runs fn(0..n−1) on up to `workers` threads; rethrows the lowest-index failure.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace collab
