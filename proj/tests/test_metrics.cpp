#include <cmath>
#include <random>

#include <doctest.h>

#include "collab/errors.hpp"
#include "collab/metrics.hpp"
#include "oracles.hpp"

using namespace collab;

TEST_SUITE("metrics") {

TEST_CASE("l_reg by hand and by recount") {
  ParamSet est(Matrix::Constant(2, 1, 1.0));
  ParamSet truth(Matrix::Zero(2, 1));
  CHECK(l_reg(est, truth) == 2.0);
  CHECK(l_reg(truth, truth) == 0.0);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + trial % 9;
    ParamSet a(oracle::random_matrix(2, n, rng));
    ParamSet b(oracle::random_matrix(2, n, rng));
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dk = a.matrix()(0, i) - b.matrix()(0, i);
      const double db = a.matrix()(1, i) - b.matrix()(1, i);
      sum += dk * dk + db * db;
    }
    CHECK(l_reg(a, b) == doctest::Approx(sum / static_cast<double>(n)));
    CHECK(l_reg(a, b) >= 0.0);
  }
  CHECK_THROWS_AS(l_reg(ParamSet(2, 3), ParamSet(2, 4)), DimensionError);
}

TEST_CASE("gmse by hand") {
  Matrix truth(4, 4);
  truth << 0, 0.5, 0.5, 0,  //
      0.5, 0, 0.5, 0,        //
      0.5, 0.5, 0, 0,        //
      1, 0, 0, 0;
  Matrix wrong = truth;
  wrong.row(0) << 0, 0, 0, 1;
  // Row 0 differs by (0, −½, −½, 1): squared norm ¼ + ¼ + 1.
  CHECK(gmse(CollabMatrix(wrong), CollabMatrix(truth)) == doctest::Approx(1.5 / 4.0));
  CHECK(gmse(CollabMatrix(truth), CollabMatrix(wrong)) == gmse(CollabMatrix(wrong), CollabMatrix(truth)));
  CHECK(gmse(CollabMatrix(truth), CollabMatrix(truth)) == 0.0);
  CHECK_THROWS_AS(gmse(CollabMatrix(3), CollabMatrix(4)), DimensionError);
}

TEST_CASE("summaries recount means and sample deviations") {
  std::vector<MetricsReport> runs;
  std::vector<double> values;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (Method m : {Method::no_colla, Method::fixed_colla}) {
      MetricsReport r;
      r.method = m;
      r.seed = seed;
      r.l_reg = 0.5 * static_cast<double>(seed * seed);
      if (m == Method::fixed_colla) r.gmse = 0.0;
      if (m == Method::no_colla) values.push_back(*r.l_reg);
      runs.push_back(r);
    }
  }
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= 10.0;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / 9.0);

  const auto summary = summarize_runs(runs);
  REQUIRE(summary.size() == 2);  // only methods that ran
  CHECK(summary[0].method == Method::no_colla);
  CHECK(summary[0].l_reg->mean == doctest::Approx(mean));
  CHECK(summary[0].l_reg->stddev == doctest::Approx(sd));
  CHECK(summary[0].l_reg->count == 10);
  CHECK_FALSE(summary[0].gmse);
  CHECK(summary[1].method == Method::fixed_colla);
  CHECK(summary[1].gmse->mean == 0.0);
  CHECK(summarize({2.0}).stddev == 0.0);
}

TEST_CASE("rendered tables mark absent metrics and failures") {
  ComparisonTable t;
  t.task = "regression";
  t.config_digest = "0123456789abcdef";
  t.seeds = {1};
  MetricsReport ok;
  ok.method = Method::no_colla;
  ok.seed = 1;
  ok.l_reg = 1.25;
  MetricsReport failed;
  failed.method = Method::original_gl;
  failed.seed = 1;
  failed.failure = "did not converge";
  t.runs = {ok, failed};
  t.summary = summarize_runs(t.runs);
  const auto text = render_text(t);
  CHECK(text.find("1.2500") != std::string::npos);
  CHECK(text.find("FAILED") != std::string::npos);
  CHECK(text.find("single run") != std::string::npos);
  const auto json = render_json(t);
  CHECK(json.find("\"single_run\": true") != std::string::npos);
  CHECK(json.find("did not converge") != std::string::npos);
  CHECK(render_json(t) == json);
}

}
