#include <random>

#include <benchmark/benchmark.h>

#include "collab/collaboration.hpp"
#include "collab/graph_learning.hpp"
#include "collab/transport.hpp"

namespace {

collab::ParamSet random_params(std::size_t m, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  collab::Matrix p(m, n);
  for (Eigen::Index c = 0; c < p.cols(); ++c)
    for (Eigen::Index r = 0; r < p.rows(); ++r) p(r, c) = g(rng);
  return collab::ParamSet(p);
}

void BM_DualAscent(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto params = random_params(2, n, 7);
  const collab::Vector d = collab::pairwise_sq_dists(params, 0);
  for (auto _ : state) benchmark::DoNotOptimize(collab::dual_ascent_solve(d, 0, 3.0, 0.1));
}
BENCHMARK(BM_DualAscent)->Arg(5)->Arg(20)->Arg(100);

void BM_UnrolledForward(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto params = random_params(m, 20, 11);
  const auto dist = collab::distance_matrix(params, 0);
  collab::UnrolledModel model{collab::ImportanceDiag(collab::Vector::Constant(static_cast<Eigen::Index>(m), 0.01), 1e-6),
                              10};
  for (auto _ : state) benchmark::DoNotOptimize(collab::unrolled_forward(dist, model));
}
BENCHMARK(BM_UnrolledForward)->Arg(2)->Arg(105);

void BM_FrameRoundTrip(benchmark::State& state) {
  collab::ParamFrame frame;
  frame.sender = 3;
  frame.round = 10;
  frame.payload = collab::Vector::LinSpaced(state.range(0), -1.0, 1.0);
  for (auto _ : state) {
    auto bytes = collab::encode_frame(frame);
    benchmark::DoNotOptimize(collab::decode_frame(bytes));
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(collab::encoded_frame_size(frame.payload.size())));
}
BENCHMARK(BM_FrameRoundTrip)->Arg(2)->Arg(105);

void BM_UpdateParams(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const std::size_t n = 20;
  const auto params = random_params(m, n, 13);
  collab::LocalSurrogate s;
  s.alpha = params.theta(0);
  collab::Matrix a = random_params(m, m, 17).matrix();
  s.hessian = a * a.transpose() + collab::Matrix::Identity(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  auto agent = collab::initialize_agent(0, n, s);
  std::map<collab::AgentId, collab::ParamVector> neighbors;
  for (collab::AgentId j = 1; j < n; ++j) neighbors.emplace(j, params.theta(j));
  for (auto _ : state) benchmark::DoNotOptimize(collab::update_params(agent, neighbors, 0.1));
}
BENCHMARK(BM_UpdateParams)->Arg(2)->Arg(105);

}  // namespace

BENCHMARK_MAIN();
