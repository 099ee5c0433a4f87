#include "collab/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/errors.hpp"

namespace collab {

double l_reg(const ParamSet& estimates, const ParamSet& truths) {
  if (estimates.num_agents() != truths.num_agents() || estimates.dim() != truths.dim()) {
    throw DimensionError("estimates and truths differ in shape");
  }
  if (estimates.num_agents() == 0) throw DimensionError("no agents to score");
  double total = 0.0;
  for (std::size_t i = 0; i < estimates.num_agents(); ++i) {
    total += (estimates.theta(i) - truths.theta(i)).squaredNorm();
  }
  return total / static_cast<double>(estimates.num_agents());
}

double gmse(const CollabMatrix& estimated, const CollabMatrix& truth) {
  if (estimated.num_agents() != truth.num_agents()) throw DimensionError("graphs differ in size");
  if (estimated.num_agents() == 0) throw DimensionError("empty graph");
  double total = 0.0;
  for (std::size_t i = 0; i < estimated.num_agents(); ++i) {
    total += (estimated.row(i).weights - truth.row(i).weights).squaredNorm();
  }
  return total / static_cast<double>(estimated.num_agents());
}

double mean_accuracy(const Task& task, const ParamSet& thetas, const std::vector<TaskDataset>& test) {
  if (test.size() != thetas.num_agents()) throw DimensionError("one test set per agent is required");
  double total = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) total += accuracy(task, thetas.theta(i), test[i]);
  return total / static_cast<double>(test.size());
}

const MethodSummary& ComparisonTable::summary_for(Method method) const {
  for (const auto& s : summary) {
    if (s.method == method) return s;
  }
  throw ConfigError("method " + to_string(method) + " is not in the comparison");
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  s.count = values.size();
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return s;
}

std::vector<MethodSummary> summarize_runs(const std::vector<MetricsReport>& runs) {
  std::vector<MethodSummary> out;
  for (Method m : {Method::no_colla, Method::original_gl, Method::unrolled_gl, Method::fixed_colla}) {
    MethodSummary s;
    s.method = m;
    std::vector<double> lreg, acc, g;
    bool present = false;
    for (const auto& r : runs) {
      if (r.method != m) continue;
      present = true;
      if (r.failure) {
        ++s.failures;
        continue;
      }
      if (r.l_reg) lreg.push_back(*r.l_reg);
      if (r.acc) acc.push_back(*r.acc);
      if (r.gmse) g.push_back(*r.gmse);
    }
    if (!present) continue;
    if (!lreg.empty()) s.l_reg = summarize(lreg);
    if (!acc.empty()) s.acc = summarize(acc);
    if (!g.empty()) s.gmse = summarize(g);
    out.push_back(s);
  }
  return out;
}

namespace {

nlohmann::ordered_json summary_json(const std::optional<MetricSummary>& s) {
  if (!s) return nullptr;
  return {{"mean", s->mean}, {"stddev", s->stddev}, {"count", s->count}};
}

std::string cell(const std::optional<MetricSummary>& s, std::size_t failures, bool single) {
  if (!s) return failures > 0 ? "FAILED" : "-";
  char buf[64];
  if (single) {
    std::snprintf(buf, sizeof buf, "%.4f", s->mean);
  } else {
    std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s->mean, s->stddev);
  }
  std::string out = buf;
  if (failures > 0) out += " (" + std::to_string(failures) + " failed)";
  return out;
}

// Display width that counts the two-byte '±' as one column.
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++w;
  }
  return w;
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json report_json(const MetricsReport& r) {
  nlohmann::ordered_json row;
  row["method"] = to_string(r.method);
  row["seed"] = r.seed;
  row["L_reg"] = optional_number(r.l_reg);
  row["ACC"] = optional_number(r.acc);
  row["GMSE"] = optional_number(r.gmse);
  row["config_digest"] = r.config_digest;
  row["dataset_digest"] = r.dataset_digest;
  row["failure"] = r.failure ? nlohmann::ordered_json(*r.failure) : nlohmann::ordered_json(nullptr);
  return row;
}

}  // namespace

std::string render_report_json(const MetricsReport& report) { return report_json(report).dump(2) + "\n"; }

std::string render_json(const ComparisonTable& table) {
  nlohmann::ordered_json j;
  j["task"] = table.task;
  j["config_digest"] = table.config_digest;
  j["seeds"] = table.seeds;
  j["single_run"] = table.single_run();
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : table.runs) runs.push_back(report_json(r));
  j["runs"] = runs;
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : table.summary) {
    summary.push_back({{"method", to_string(s.method)},
                       {"L_reg", summary_json(s.l_reg)},
                       {"ACC", summary_json(s.acc)},
                       {"GMSE", summary_json(s.gmse)},
                       {"failures", s.failures}});
  }
  j["summary"] = summary;
  return j.dump(2) + "\n";
}

std::string render_text(const ComparisonTable& table) {
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header{"Task/Method"};
  for (const auto& s : table.summary) header.push_back(to_string(s.method));
  grid.push_back(header);

  const bool regression = table.task == "regression";
  std::vector<std::string> first{regression ? "L_reg" : "ACC"};
  std::vector<std::string> second{"GMSE"};
  for (const auto& s : table.summary) {
    first.push_back(cell(regression ? s.l_reg : s.acc, s.failures, table.single_run()));
    second.push_back(cell(s.gmse, s.method == Method::no_colla ? 0 : s.failures, table.single_run()));
  }
  grid.push_back(first);
  grid.push_back(second);

  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  std::ostringstream out;
  out << table.task << " (" << table.seeds.size() << (table.single_run() ? " seed, single run" : " seeds")
      << ", config " << table.config_digest << ")\n";
  for (const auto& row : grid) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << row[c];
      if (c + 1 < row.size()) out << std::string(widths[c] - display_width(row[c]) + 3, ' ');
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace collab
