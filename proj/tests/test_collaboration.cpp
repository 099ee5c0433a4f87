#include <filesystem>
#include <random>

#include <doctest.h>

#include "collab/collaboration.hpp"
#include "collab/data.hpp"
#include "collab/errors.hpp"
#include "oracles.hpp"

using namespace collab;

namespace {

LocalSurrogate scalar_surrogate(double h, double alpha) {
  LocalSurrogate s;
  s.alpha = Vector::Constant(1, alpha);
  s.hessian = Matrix::Constant(1, 1, h);
  return s;
}

std::vector<AgentState> regression_agents(const RegressionData& data) {
  LineRegression task;
  std::vector<AgentState> agents;
  for (std::size_t i = 0; i < data.datasets.size(); ++i) {
    agents.push_back(initialize_agent(static_cast<AgentId>(i), data.datasets.size(), task, data.datasets[i]));
  }
  return agents;
}

RegressionScenario small_scenario(std::size_t n) {
  RegressionScenario s;
  s.num_agents = n;
  s.samples_per_agent = 30;
  return s;
}

}  // namespace

TEST_SUITE("collaboration") {

TEST_CASE("scalar update by substitution") {
  auto agent = initialize_agent(0, 2, scalar_surrogate(2.0, 1.0));
  std::map<AgentId, ParamVector> nb{{1, Vector::Constant(1, 3.0)}};
  const auto up = update_params(agent, nb, 0.1);
  CHECK(up.theta(0) == doctest::Approx(2.6 / 2.2).epsilon(1e-14));
  CHECK(update_params(agent, nb, 0.0).theta(0) == 1.0);
}

TEST_CASE("closed-form update matches an iterative minimizer") {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + trial % 5;
    const std::size_t n = 2 + trial % 6;
    LocalSurrogate s;
    s.hessian = oracle::random_spd(m, rng);
    s.alpha = oracle::random_matrix(m, 1, rng).col(0);
    auto agent = initialize_agent(0, n, s);
    CollabWeights w{0, Vector::Zero(static_cast<Eigen::Index>(n))};
    for (std::size_t j = 1; j < n; ++j) w.weights(static_cast<Eigen::Index>(j)) = u(rng);
    w.weights /= w.weights.sum();
    agent.set_weights(w);
    std::map<AgentId, ParamVector> nb;
    std::vector<Vector> neighbors;
    Vector wn(static_cast<Eigen::Index>(n - 1));
    for (std::size_t j = 1; j < n; ++j) {
      nb[static_cast<AgentId>(j)] = oracle::random_matrix(m, 1, rng, 2.0).col(0);
      neighbors.push_back(nb[static_cast<AgentId>(j)]);
      wn(static_cast<Eigen::Index>(j - 1)) = w.weights(static_cast<Eigen::Index>(j));
    }
    const double lambda2 = 0.01 + u(rng);
    const Vector closed = update_params(agent, nb, lambda2).theta;
    const Vector iterative = oracle::surrogate_minimizer(s.alpha, s.hessian, lambda2, wn, neighbors);
    for (std::size_t k = 0; k < m; ++k) {
      CHECK(oracle::close_rel(closed(k), iterative(k), 1e-5, 1e-9));
    }
  }
}

TEST_CASE("missing partner parameters are an error") {
  auto agent = initialize_agent(0, 3, scalar_surrogate(1.0, 0.0));
  std::map<AgentId, ParamVector> nb{{1, Vector::Constant(1, 3.0)}};
  CHECK_THROWS_AS(update_params(agent, nb, 0.1), IncompleteBroadcastError);
}

TEST_CASE("initialization fits the local model and trusts everyone") {
  RegressionScenario s = small_scenario(4);
  s.noise_sigma = 0.0;
  const auto data = gen_regression(s, 3);
  const auto agents = regression_agents(data);
  LineRegression task;
  std::mt19937_64 rng(2);
  for (const auto& a : agents) {
    CHECK(a.theta(0) == doctest::Approx(data.truth.theta(a.id)(0)).epsilon(1e-10));
    CHECK(a.theta(1) == doctest::Approx(data.truth.theta(a.id)(1)).epsilon(1e-10));
    CHECK(a.partners.size() == 3);
  }
  RegressionScenario noisy = small_scenario(4);
  const auto nd = gen_regression(noisy, 4);
  const auto noisy_agents = regression_agents(nd);
  for (const auto& a : noisy_agents) {
    const double base = task.loss(a.theta, nd.datasets[a.id]);
    for (int p = 0; p < 100; ++p) {
      const Vector probe = a.theta + oracle::random_matrix(2, 1, rng, 0.3).col(0);
      CHECK(base <= task.loss(probe, nd.datasets[a.id]));
    }
  }
}

TEST_CASE("round schedule") {
  CHECK(RoundPlan::for_round(0, 10).phase == Phase::graph_refresh);
  CHECK(RoundPlan::for_round(3, 10).phase == Phase::neighbor_exchange);
  CHECK(RoundPlan::for_round(10, 10).phase == Phase::graph_refresh);
}

TEST_CASE("experiment schedule and message counts") {
  const auto data = gen_regression(small_scenario(6), 5);
  const auto truth = data.ground_truth;
  FixedLearner fixed(truth);

  SUBCASE("T1 = T2 gives one refresh") {
    InMemoryBus bus(6);
    ExperimentSettings s{Method::fixed_colla, 0.1, 10, 10, 1};
    const auto tr = run_experiment(s, regression_agents(data), &bus, &fixed);
    int refreshes = 0;
    for (const auto& r : tr.rounds) refreshes += r.graph.has_value();
    CHECK(refreshes == 1);
    CHECK(tr.rounds[0].graph.has_value());
  }
  SUBCASE("T1 = 2·T2 gives two refreshes, the learned graph each time, partner fan-out elsewhere") {
    InMemoryBus bus(6);
    ExperimentSettings s{Method::fixed_colla, 0.1, 20, 10, 1};
    const auto tr = run_experiment(s, regression_agents(data), &bus, &fixed);
    std::uint64_t partner_total = 0;
    for (std::size_t i = 0; i < 6; ++i) partner_total += truth.row(i).partners().size();
    for (const auto& r : tr.rounds) {
      if (r.round % 10 == 0) {
        REQUIRE(r.graph);
        CHECK(*r.graph == truth);
        CHECK(r.broadcast_messages == 6 * 5);
        CHECK(r.unicast_messages == 0);
      } else {
        CHECK_FALSE(r.graph);
        CHECK(r.broadcast_messages == 0);
        CHECK(r.unicast_messages == partner_total);
      }
    }
    // Symmetric support: each agent's fan-out equals its own partner count.
    const auto per_round = bus.traffic().per_round().at(3);
    for (std::size_t i = 0; i < 6; ++i) CHECK(per_round[i].messages_sent == truth.row(i).partners().size());
  }
  SUBCASE("no-colla never communicates and keeps the local fits") {
    ExperimentSettings s{Method::no_colla, 0.1, 20, 10, 1};
    const auto agents = regression_agents(data);
    const auto tr = run_experiment(s, agents, nullptr, nullptr);
    for (const auto& r : tr.rounds) CHECK(r.messages == 0);
    CHECK(tr.final_thetas().matrix() == tr.initial.matrix());
    CHECK_FALSE(tr.final_graph());
  }
}

TEST_CASE("agents with identical data follow identical trajectories") {
  RegressionScenario s = small_scenario(4);
  auto data = gen_regression(s, 9);
  data.datasets[1] = data.datasets[0];
  DualAscentLearner learner(3.0, 0.1);
  InMemoryBus bus(4);
  ExperimentSettings es{Method::original_gl, 0.1, 20, 10, 1};
  const auto tr = run_experiment(es, regression_agents(data), &bus, &learner);
  for (const auto& r : tr.rounds) CHECK(r.thetas.theta(0) == r.thetas.theta(1));
}

TEST_CASE("worker count does not change the trajectory") {
  const auto data = gen_regression(small_scenario(8), 12);
  DualAscentLearner learner(3.0, 0.1);
  ExperimentSettings es{Method::original_gl, 0.1, 20, 10, 1};
  InMemoryBus a(8);
  const auto one = run_experiment(es, regression_agents(data), &a, &learner);
  es.workers = 4;
  InMemoryBus b(8);
  const auto four = run_experiment(es, regression_agents(data), &b, &learner);
  REQUIRE(one.rounds.size() == four.rounds.size());
  for (std::size_t t = 0; t < one.rounds.size(); ++t) {
    CHECK(one.rounds[t].thetas.matrix() == four.rounds[t].thetas.matrix());
  }
  CHECK(*one.final_graph() == *four.final_graph());
}

TEST_CASE("stale partners fall back to the last received parameters") {
  std::vector<AgentState> agents;
  for (AgentId i = 0; i < 3; ++i) agents.push_back(initialize_agent(i, 3, scalar_surrogate(1.0, static_cast<double>(i))));
  InMemoryBus bus(3, std::chrono::milliseconds(20));
  const auto truth = CollabMatrix(Matrix::Constant(3, 3, 0.5) - 0.5 * Matrix::Identity(3, 3));
  FixedLearner learner(truth);
  const auto r0 = RoundPlan::for_round(0, 10);
  for (auto& a : agents) publish_round(a, bus, r0);
  for (auto& a : agents) a = complete_round(std::move(a), bus, 0.1, learner, r0);

  // Round 1: agent 2 goes silent.
  const auto r1 = RoundPlan::for_round(1, 10);
  publish_round(agents[1], bus, r1);
  const double theta2_round0 = agents[2].theta(0);
  auto a0 = complete_round(agents[0], bus, 0.1, learner, r1);
  CHECK(a0.staleness_events == 1);
  std::map<AgentId, ParamVector> expected{{1, agents[1].theta}, {2, Vector::Constant(1, 2.0)}};
  // Agent 0 last heard θ_2 at the round-0 broadcast, before any update.
  CHECK(a0.last_known.at(2)(0) == 2.0);
  CHECK(theta2_round0 != 2.0);
  CHECK(a0.theta(0) == doctest::Approx(update_params(agents[0], expected, 0.1).theta(0)));
}

TEST_CASE("trajectories persist as line-delimited records") {
  const auto data = gen_regression(small_scenario(4), 2);
  DualAscentLearner learner(3.0, 0.1);
  InMemoryBus bus(4);
  ExperimentSettings es{Method::original_gl, 0.1, 4, 2, 1};
  const auto tr = run_experiment(es, regression_agents(data), &bus, &learner);
  const auto path = (std::filesystem::temp_directory_path() / "collab_traj.jsonl").string();
  write_trajectory(path, tr, "abc");
  const auto back = read_trajectory(path);
  CHECK(back.initial.matrix() == tr.initial.matrix());
  REQUIRE(back.rounds.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(back.rounds[t].thetas.matrix() == tr.rounds[t].thetas.matrix());
    CHECK(back.rounds[t].phase == tr.rounds[t].phase);
    CHECK(back.rounds[t].graph.has_value() == tr.rounds[t].graph.has_value());
    CHECK(back.rounds[t].messages == tr.rounds[t].messages);
  }
}

TEST_CASE("parallel_for reports the lowest failing index") {
  try {
    parallel_for(10, 4, [](std::size_t i) {
      if (i == 3 || i == 7) throw std::runtime_error("fail " + std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "fail 3");
  }
}

TEST_CASE("method names") {
  for (Method m : {Method::no_colla, Method::original_gl, Method::unrolled_gl, Method::fixed_colla}) {
    CHECK(parse_method(to_string(m)) == m);
  }
  CHECK_THROWS_AS(parse_method("gossip"), ConfigError);
}

}
