#include "collab/collaboration.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"

namespace collab {

SurrogateSolver::SurrogateSolver(const LocalSurrogate& surrogate, double lambda2, double weight_sum)
    : alpha_(surrogate.alpha), lambda2_(lambda2) {
  if (!(lambda2 >= 0.0)) throw ConfigError("lambda2 must be non-negative");
  const auto m = surrogate.alpha.size();
  if (surrogate.hessian.rows() != m || surrogate.hessian.cols() != m) {
    throw DimensionError("surrogate Hessian does not match the parameter dimension");
  }
  if (lambda2 == 0.0 || weight_sum == 0.0) {
    passthrough_ = true;
    return;
  }
  h_alpha_ = surrogate.hessian * surrogate.alpha;
  Matrix system = surrogate.hessian;
  system.diagonal().array() += 2.0 * lambda2 * weight_sum;
  llt_.compute(system);
  if (llt_.info() != Eigen::Success) {
    system.diagonal().array() += 1e-10;
    llt_.compute(system);
    regularized_ = true;
    if (llt_.info() != Eigen::Success) throw ConvergenceError("parameter update system is not positive definite", 0.0);
  }
}

ParamVector SurrogateSolver::solve(const Vector& neighbor_sum) const {
  if (passthrough_) return alpha_;
  return llt_.solve(h_alpha_ + 2.0 * lambda2_ * neighbor_sum);
}

Vector SurrogateSolver::apply_inverse(const Vector& v) const {
  if (passthrough_) return Vector::Zero(v.size());
  return llt_.solve(v);
}

Vector weighted_neighbor_sum(const CollabWeights& weights, const ParamSet& params) {
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(params.dim()));
  for (Eigen::Index j = 0; j < weights.weights.size(); ++j) {
    const double w = weights.weights[j];
    if (w > 0.0) acc += w * params.theta(static_cast<std::size_t>(j));
  }
  return acc;
}

void AgentState::set_weights(CollabWeights w) {
  weights = std::move(w);
  partners = weights.partners();
  solver.reset();
}

const SurrogateSolver& AgentState::solver_for(double lambda2) {
  if (!solver || solver_lambda2 != lambda2) {
    solver = std::make_shared<const SurrogateSolver>(surrogate, lambda2, weights.weights.sum());
    solver_lambda2 = lambda2;
  }
  return *solver;
}

AgentState initialize_agent(AgentId id, std::size_t num_agents, const Task& task, const TaskDataset& data,
                            const FitSettings& fit) {
  return initialize_agent(id, num_agents, fit_local(task, data, fit));
}

AgentState initialize_agent(AgentId id, std::size_t num_agents, LocalSurrogate surrogate) {
  if (id >= num_agents) throw DimensionError("agent id outside the experiment");
  AgentState state;
  state.id = id;
  state.theta = surrogate.alpha;
  state.surrogate = std::move(surrogate);
  state.set_weights(CollabWeights::uniform(id, num_agents));
  return state;
}

namespace {

template <typename Lookup>
Vector neighbor_sum(const AgentState& state, Lookup&& lookup) {
  Vector acc = Vector::Zero(state.theta.size());
  for (AgentId j : state.partners) acc += state.weights.weights[j] * lookup(j);
  return acc;
}

}  // namespace

ParamUpdate update_params(const AgentState& state, const std::map<AgentId, ParamVector>& neighbor_params,
                          double lambda2) {
  const Vector sum = neighbor_sum(state, [&](AgentId j) -> const ParamVector& {
    auto it = neighbor_params.find(j);
    if (it == neighbor_params.end()) {
      throw IncompleteBroadcastError("missing parameters of partner " + std::to_string(j));
    }
    if (it->second.size() != state.theta.size()) throw DimensionError("partner parameters have the wrong length");
    return it->second;
  });
  const SurrogateSolver solver(state.surrogate, lambda2, state.weights.weights.sum());
  return ParamUpdate{solver.solve(sum), solver.regularized()};
}

void publish_round(const AgentState& state, Transport& transport, const RoundPlan& plan) {
  if (plan.round != state.round) throw ConfigError("round plan does not match the agent's round");
  const ParamFrame frame{state.id, static_cast<std::uint32_t>(plan.round), state.theta, 0};
  if (plan.phase == Phase::graph_refresh) {
    transport.broadcast(frame);
  } else {
    for (AgentId r : transport.subscribers_of(state.id)) transport.send_to(frame, r);
  }
}

AgentState complete_round(AgentState state, Transport& transport, double lambda2, const GraphLearner& learner,
                          const RoundPlan& plan) {
  if (plan.round != state.round) throw ConfigError("round plan does not match the agent's round");
  const std::size_t n = transport.num_endpoints();

  std::vector<AgentId> expected;
  if (plan.phase == Phase::graph_refresh) {
    for (AgentId j = 0; j < n; ++j) {
      if (j != state.id) expected.push_back(j);
    }
  } else {
    expected = state.partners;
  }
  GatherResult gathered = transport.gather_round(state.id, expected, static_cast<std::uint32_t>(plan.round), plan.phase);
  for (auto& [sender, frame] : gathered.frames) {
    if (frame.payload.size() != state.theta.size()) throw DimensionError("received parameters of the wrong length");
    state.last_known[sender] = frame.payload;
  }
  for (AgentId s : gathered.stale) {
    if (!state.last_known.contains(s)) {
      throw IncompleteBroadcastError("no parameters ever received from agent " + std::to_string(s));
    }
    ++state.staleness_events;
    std::cerr << "collab: agent " << state.id << " reusing stale parameters of agent " << s << " at round "
              << plan.round << '\n';
  }
  auto lookup = [&](AgentId j) -> const ParamVector& { return state.last_known.at(j); };

  if (plan.phase == Phase::graph_refresh) {
    ParamSet all(n, static_cast<std::size_t>(state.theta.size()));
    for (AgentId j = 0; j < n; ++j) all.theta(j) = j == state.id ? state.theta : lookup(j);
    state.set_weights(learner.learn(all, state.id));
    transport.set_partners(state.id, state.partners);
  }
  const SurrogateSolver& solver = state.solver_for(lambda2);
  state.theta = solver.solve(neighbor_sum(state, lookup));
  if (solver.regularized()) ++state.regularization_events;
  if (!state.theta.allFinite()) throw ConvergenceError("parameter update produced non-finite values", 0.0);
  ++state.round;
  return state;
}

AgentState agent_round(AgentState state, Transport& transport, double lambda2, const GraphLearner& learner,
                       const RoundPlan& plan) {
  publish_round(state, transport, plan);
  return complete_round(std::move(state), transport, lambda2, learner, plan);
}

std::string to_string(Method method) {
  switch (method) {
    case Method::no_colla: return "no-colla";
    case Method::original_gl: return "original-gl";
    case Method::unrolled_gl: return "unrolled-gl";
    case Method::fixed_colla: return "fixed-colla";
  }
  return "unknown";
}

Method parse_method(const std::string& text) {
  for (Method m : {Method::no_colla, Method::original_gl, Method::unrolled_gl, Method::fixed_colla}) {
    if (to_string(m) == text) return m;
  }
  throw ConfigError("unknown method '" + text + "' (expected no-colla, original-gl, unrolled-gl, fixed-colla)");
}

std::optional<CollabMatrix> Trajectory::final_graph() const {
  for (auto it = rounds.rbegin(); it != rounds.rend(); ++it) {
    if (it->graph) return it->graph;
  }
  return std::nullopt;
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Trajectory run_experiment(const ExperimentSettings& settings, std::vector<AgentState> agents, Transport* transport,
                          const GraphLearner* learner) {
  const std::size_t n = agents.size();
  if (n < 2) throw ConfigError("an experiment needs at least two agents");
  if (settings.rounds < 1 || settings.refresh_interval < 1) throw ConfigError("T1 and T2 must be >= 1");
  const bool communicates = settings.method != Method::no_colla;
  if (communicates) {
    if (transport == nullptr || learner == nullptr) throw DependencyError("collaborative methods need a transport and a learner");
    if (transport->num_endpoints() != n) throw ConfigError("transport endpoint count differs from the agent count");
  }
  std::vector<ParamVector> initial;
  for (std::size_t i = 0; i < n; ++i) {
    if (agents[i].id != i) throw ConfigError("agents must be ordered by id");
    if (agents[i].round != 0) throw ConfigError("agents must start at round 0");
    initial.push_back(agents[i].theta);
  }

  Trajectory trajectory;
  trajectory.initial = ParamSet::from_vectors(initial);
  trajectory.rounds.reserve(settings.rounds);
  for (std::size_t t = 0; t < settings.rounds; ++t) {
    const RoundPlan plan = RoundPlan::for_round(t, settings.refresh_interval);
    RoundRecord record;
    record.round = t;
    record.phase = plan.phase;
    try {
      if (communicates) {
        parallel_for(n, settings.workers, [&](std::size_t i) { publish_round(agents[i], *transport, plan); });
        parallel_for(n, settings.workers, [&](std::size_t i) {
          agents[i] = complete_round(std::move(agents[i]), *transport, settings.lambda2, *learner, plan);
        });
      } else {
        for (auto& a : agents) ++a.round;
      }
    } catch (const std::exception& e) {
      throw ExperimentError("round " + std::to_string(t) + " failed: " + e.what(), t);
    }
    std::vector<ParamVector> thetas;
    thetas.reserve(n);
    for (const auto& a : agents) thetas.push_back(a.theta);
    record.thetas = ParamSet::from_vectors(thetas);
    if (communicates && plan.phase == Phase::graph_refresh) {
      CollabMatrix w(n);
      for (const auto& a : agents) w.set_row(a.weights);
      record.graph = std::move(w);
    }
    if (communicates) {
      const TrafficCounters c = transport->traffic().round_totals(static_cast<std::uint32_t>(t));
      record.messages = c.messages_sent;
      record.broadcast_messages = c.broadcast_messages;
      record.unicast_messages = c.unicast_messages;
      record.bytes = c.bytes_sent;
    }
    trajectory.rounds.push_back(std::move(record));
  }
  for (const auto& a : agents) {
    trajectory.staleness_events += a.staleness_events;
    trajectory.regularization_events += a.regularization_events;
  }
  return trajectory;
}

// ------------------------------------------------------------ persistence

namespace {

nlohmann::json matrix_rows(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Matrix rows_matrix(const nlohmann::json& rows) {
  const auto r = static_cast<Eigen::Index>(rows.size());
  const auto c = r == 0 ? 0 : static_cast<Eigen::Index>(rows.at(0).size());
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto row = rows.at(static_cast<std::size_t>(i)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != c) throw SchemaError("ragged matrix in trajectory file");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

// θ is stored one agent per row.
nlohmann::json theta_rows(const ParamSet& p) { return matrix_rows(p.matrix().transpose()); }
ParamSet theta_from_rows(const nlohmann::json& rows) { return ParamSet(rows_matrix(rows).transpose()); }

}  // namespace

void write_trajectory(const std::string& path, const Trajectory& trajectory, const std::string& config_digest) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write trajectory file " + path);
  nlohmann::ordered_json header;
  header["type"] = "header";
  header["config_digest"] = config_digest;
  header["num_agents"] = trajectory.initial.num_agents();
  header["dim"] = trajectory.initial.dim();
  header["staleness_events"] = trajectory.staleness_events;
  header["regularization_events"] = trajectory.regularization_events;
  header["initial_theta"] = theta_rows(trajectory.initial);
  out << header.dump() << '\n';
  for (const auto& r : trajectory.rounds) {
    nlohmann::ordered_json j;
    j["type"] = "round";
    j["t"] = r.round;
    j["phase"] = to_string(r.phase);
    j["theta"] = theta_rows(r.thetas);
    j["W"] = r.graph ? matrix_rows(r.graph->matrix()) : nlohmann::json(nullptr);
    j["messages"] = {{"total", r.messages},
                     {"broadcast", r.broadcast_messages},
                     {"unicast", r.unicast_messages},
                     {"bytes", r.bytes}};
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing trajectory file " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read trajectory file " + path);
  Trajectory t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      if (j.at("type") == "header") {
        t.initial = theta_from_rows(j.at("initial_theta"));
        t.staleness_events = j.at("staleness_events").get<std::size_t>();
        t.regularization_events = j.at("regularization_events").get<std::size_t>();
        have_header = true;
        continue;
      }
      RoundRecord r;
      r.round = j.at("t").get<std::size_t>();
      r.phase = j.at("phase") == "graph-refresh" ? Phase::graph_refresh : Phase::neighbor_exchange;
      r.thetas = theta_from_rows(j.at("theta"));
      if (!j.at("W").is_null()) r.graph = CollabMatrix(rows_matrix(j.at("W")));
      const auto& m = j.at("messages");
      r.messages = m.at("total").get<std::uint64_t>();
      r.broadcast_messages = m.at("broadcast").get<std::uint64_t>();
      r.unicast_messages = m.at("unicast").get<std::uint64_t>();
      r.bytes = m.at("bytes").get<std::uint64_t>();
      t.rounds.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed trajectory record: ") + e.what(), line_no);
    }
  }
  if (!have_header) throw SchemaError("trajectory file " + path + " has no header record");
  return t;
}

}  // namespace collab
