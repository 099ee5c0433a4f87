#include <algorithm>
#include <random>

#include <doctest.h>

#include "collab/errors.hpp"
#include "collab/trainer.hpp"
#include "oracles.hpp"

using namespace collab;

namespace {

TrainingScenario random_scenario(std::size_t n, std::size_t m, std::mt19937_64& rng) {
  TrainingScenario s;
  Matrix truth = oracle::random_matrix(m, n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    LocalSurrogate ls;
    ls.hessian = oracle::random_spd(m, rng, 0.5);
    ls.alpha = truth.col(static_cast<Eigen::Index>(i)) + oracle::random_matrix(m, 1, rng, 0.5).col(0);
    s.surrogates.push_back(ls);
  }
  s.truth = ParamSet(truth);
  return s;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("analytic gradient matches central differences") {
  std::mt19937_64 rng(17);
  int compared = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + trial % 4;
    const std::size_t m = 1 + trial % 4;
    PipelineSettings ps;
    ps.unroll_steps = 1 + trial % 3;
    ps.refresh_interval = 1 + trial % 4;
    ps.refreshes = 1 + trial % 2;
    std::vector<TrainingScenario> sc{random_scenario(n, m, rng), random_scenario(n, m, rng)};
    const auto p0 = initial_importance(sc, 1e-6, 0.3);
    CollaborationPipeline pipeline(sc, ps);
    Vector analytic;
    pipeline.loss_and_gradient(p0, analytic);
    const Vector fd = finite_difference_gradient(pipeline, p0, 1e-4);
    for (Eigen::Index k = 0; k < analytic.size(); ++k) {
      CHECK(oracle::close_rel(analytic(k), fd(k), 1e-3, 1e-7 * std::max(1.0, std::abs(fd(k)))));
    }
    ++compared;
  }
  CHECK(compared == 20);
}

TEST_CASE("finite differences agree with analytic on the N=4, M=2, K=2 case") {
  std::mt19937_64 rng(5);
  PipelineSettings ps;
  ps.unroll_steps = 2;
  ps.refresh_interval = 3;
  CollaborationPipeline pipeline({random_scenario(4, 2, rng)}, ps);
  const ImportanceDiag p(Vector::Constant(2, 0.05), 1e-6);
  Vector analytic;
  pipeline.loss_and_gradient(p, analytic);
  const Vector fd = finite_difference_gradient(pipeline, p, 1e-4);
  CHECK(oracle::close_rel(analytic(0), fd(0), 1e-3));
  CHECK(oracle::close_rel(analytic(1), fd(1), 1e-3));
}

TEST_CASE("zero learning rate or zero epochs leave P unchanged") {
  std::mt19937_64 rng(6);
  CollaborationPipeline pipeline({random_scenario(4, 2, rng)}, PipelineSettings{});
  const UnrolledModel init{ImportanceDiag(Vector::Constant(2, 0.05), 1e-6), 10};
  TrainerSettings ts;
  ts.learning_rate = 0.0;
  ts.epochs = 1;
  CHECK(train_importance(pipeline, init, ts).model.importance.diag() == init.importance.diag());
  ts.learning_rate = 0.1;
  ts.epochs = 0;
  const auto r = train_importance(pipeline, init, ts);
  CHECK(r.model.importance.diag() == init.importance.diag());
  CHECK(r.losses.size() == 1);
  CHECK(r.best_epoch == 0);
}

TEST_CASE("training keeps the best-seen P and respects the floor") {
  std::mt19937_64 rng(7);
  CollaborationPipeline pipeline({random_scenario(6, 3, rng), random_scenario(6, 3, rng)}, PipelineSettings{});
  const auto p0 = initial_importance(pipeline.scenarios(), 1e-3, 0.1);
  TrainerSettings ts;
  ts.epochs = 25;
  ts.learning_rate = 2.0;  // large enough that some entries hit the floor
  ts.gamma = 1e-3;
  ts.mode = GradientMode::analytic;
  const auto r = train_importance(pipeline, UnrolledModel{p0, 10}, ts);
  CHECK(r.losses.size() == 26);
  CHECK(r.losses[r.best_epoch] <= r.losses[0]);
  CHECK(*std::min_element(r.losses.begin(), r.losses.end()) == r.losses[r.best_epoch]);
  CHECK(r.model.importance.diag().minCoeff() >= 1e-3);
  CHECK(pipeline.loss(r.model.importance) == doctest::Approx(r.losses[r.best_epoch]));
}

TEST_CASE("a candidate below the floor is clamped to exactly gamma") {
  const ImportanceDiag p(Vector::Constant(2, 1.0), 0.25);
  Vector cand(2);
  cand << 0.1, 3.0;
  CHECK(p.projected(cand).diag()(0) == 0.25);
}

TEST_CASE("pipeline needs consistent scenarios") {
  std::mt19937_64 rng(8);
  CHECK_THROWS_AS(CollaborationPipeline({random_scenario(4, 2, rng), random_scenario(4, 3, rng)}, PipelineSettings{}), DimensionError);
  CHECK_THROWS(CollaborationPipeline({}, PipelineSettings{}));
}

}
