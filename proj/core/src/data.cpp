#include "collab/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "collab/errors.hpp"
#include "collab/graph_learning.hpp"
#include "collab/random.hpp"

namespace collab {

namespace {

/// Agents are dealt round-robin into groups after a seeded shuffle.
std::vector<int> shuffled_groups(std::size_t num_agents, std::size_t num_groups, std::mt19937_64& rng) {
  std::vector<std::size_t> order(num_agents);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> group_of(num_agents);
  for (std::size_t pos = 0; pos < num_agents; ++pos) group_of[order[pos]] = static_cast<int>(pos % num_groups);
  return group_of;
}

}  // namespace

void RegressionScenario::validate() const {
  if (lines.size() < 1) throw ConfigError("regression scenario needs at least one line");
  if (num_agents < 2 * lines.size()) throw ConfigError("every line needs at least two agents");
  if (!(x_hi > x_lo)) throw ConfigError("segment range must have positive width");
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (samples_per_agent < 2) throw ConfigError("each agent needs at least two samples");
}

RegressionData gen_regression(const RegressionScenario& scenario, std::uint64_t seed) {
  scenario.validate();
  const std::size_t n = scenario.num_agents;
  auto layout = make_global_stream(seed, StreamTag::scenario);
  RegressionData out;
  out.groups = GroupAssignment(shuffled_groups(n, scenario.lines.size(), layout));
  out.ground_truth = ground_truth_graph(out.groups);
  out.truth = ParamSet(n, 2);
  out.segments.resize(n);

  for (const auto& [label, agents] : out.groups.members()) {
    std::vector<std::size_t> slots(agents.size());
    std::iota(slots.begin(), slots.end(), 0);
    std::shuffle(slots.begin(), slots.end(), layout);
    const double width = (scenario.x_hi - scenario.x_lo) / static_cast<double>(agents.size());
    for (std::size_t k = 0; k < agents.size(); ++k) {
      const double lo = scenario.x_lo + width * static_cast<double>(slots[k]);
      out.segments[agents[k]] = {lo, lo + width};
    }
  }

  out.datasets.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    const Line& line = scenario.lines[static_cast<std::size_t>(out.groups.group_of(i))];
    out.truth.theta(i) << line.slope, line.intercept;
    auto rng = make_stream(seed, i, StreamTag::samples);
    std::uniform_real_distribution<double> xs(out.segments[i].first, out.segments[i].second);
    std::normal_distribution<double> noise(0.0, 1.0);
    TaskDataset d{Matrix(static_cast<Eigen::Index>(scenario.samples_per_agent), 1),
                  Vector(static_cast<Eigen::Index>(scenario.samples_per_agent))};
    for (Eigen::Index s = 0; s < d.inputs.rows(); ++s) {
      const double x = xs(rng);
      d.inputs(s, 0) = x;
      d.targets[s] = line.slope * x + line.intercept + scenario.noise_sigma * noise(rng);
    }
    out.datasets[i] = std::move(d);
  }
  return out;
}

void ClassificationScenario::validate() const {
  if (num_agents < 2 * num_groups) throw ConfigError("every group needs at least two agents");
  if (num_groups < 1 || num_classes % num_groups != 0) throw ConfigError("classes must split evenly into groups");
  if (classes_per_group() < 2) throw ConfigError("each group needs at least two classes");
  if (feature_dim < 1) throw ConfigError("feature dimension must be positive");
  if (samples_per_agent < 2 + sample_jitter) throw ConfigError("too few samples per agent");
  if (!(dirichlet_concentration > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  if (!(cluster_sigma > 0.0) || !(cluster_radius >= 0.0)) throw ConfigError("invalid cluster geometry");
  if (eval_per_class < 1) throw ConfigError("evaluation sets need at least one sample per class");
}

namespace {

Vector draw_mixture(std::size_t classes, double concentration, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vector p(static_cast<Eigen::Index>(classes));
    for (Eigen::Index c = 0; c < p.size(); ++c) p[c] = gamma(rng);
    const double total = p.sum();
    if (!(total > 0.0)) continue;
    p /= total;
    if (p.maxCoeff() < 1.0) return p;  // a point mass is a degenerate mixture
  }
  throw ConfigError("could not draw a non-degenerate class mixture; raise the Dirichlet concentration");
}

TaskDataset draw_samples(const std::vector<int>& local_labels, const Matrix& means, int class_offset, double sigma,
                         std::mt19937_64& rng) {
  const auto d = means.cols();
  TaskDataset out{Matrix(static_cast<Eigen::Index>(local_labels.size()), d),
                  Vector(static_cast<Eigen::Index>(local_labels.size()))};
  std::normal_distribution<double> noise(0.0, 1.0);
  for (Eigen::Index s = 0; s < out.inputs.rows(); ++s) {
    const int label = local_labels[static_cast<std::size_t>(s)];
    for (Eigen::Index f = 0; f < d; ++f) out.inputs(s, f) = means(class_offset + label, f) + sigma * noise(rng);
    out.targets[s] = label;
  }
  return out;
}

TaskDataset balanced_set(std::size_t classes, std::size_t per_class, const Matrix& means, int class_offset, double sigma,
                         std::mt19937_64& rng) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.insert(labels.end(), per_class, static_cast<int>(c));
  return draw_samples(labels, means, class_offset, sigma, rng);
}

}  // namespace

ClassificationData gen_classification(const ClassificationScenario& scenario, std::uint64_t seed) {
  scenario.validate();
  const std::size_t n = scenario.num_agents;
  const std::size_t per_group = scenario.classes_per_group();
  auto layout = make_global_stream(seed, StreamTag::scenario);

  ClassificationData out;
  out.class_means = Matrix(static_cast<Eigen::Index>(scenario.num_classes), static_cast<Eigen::Index>(scenario.feature_dim));
  {
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index c = 0; c < out.class_means.rows(); ++c) {
      Vector dir(out.class_means.cols());
      do {
        for (Eigen::Index f = 0; f < dir.size(); ++f) dir[f] = gauss(layout);
      } while (dir.norm() == 0.0);
      out.class_means.row(c) = (scenario.cluster_radius / dir.norm()) * dir.transpose();
    }
  }
  out.groups = GroupAssignment(shuffled_groups(n, scenario.num_groups, layout));
  out.ground_truth = ground_truth_graph(out.groups);

  out.datasets.resize(n);
  out.test.resize(n);
  out.heldin.resize(n);
  out.mixtures.resize(n);
  for (AgentId i = 0; i < n; ++i) {
    const int offset = out.groups.group_of(i) * static_cast<int>(per_group);
    auto rng = make_stream(seed, i, StreamTag::samples);
    std::uniform_int_distribution<std::size_t> jitter(0, 2 * scenario.sample_jitter);
    const std::size_t count = scenario.samples_per_agent - scenario.sample_jitter + jitter(rng);

    std::vector<int> labels;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ConfigError("agent " + std::to_string(i) + " never saw two distinct classes");
      out.mixtures[i] = draw_mixture(per_group, scenario.dirichlet_concentration, rng);
      std::discrete_distribution<int> pick(out.mixtures[i].data(), out.mixtures[i].data() + out.mixtures[i].size());
      labels.resize(count);
      for (auto& l : labels) l = pick(rng);
      std::vector<int> seen = labels;
      std::sort(seen.begin(), seen.end());
      if (std::unique(seen.begin(), seen.end()) - seen.begin() >= 2) break;
    }
    out.datasets[i] = draw_samples(labels, out.class_means, offset, scenario.cluster_sigma, rng);

    auto eval_rng = make_stream(seed, i, StreamTag::holdout);
    out.test[i] = balanced_set(per_group, scenario.eval_per_class, out.class_means, offset, scenario.cluster_sigma, eval_rng);
    out.heldin[i] = balanced_set(per_group, scenario.eval_per_class, out.class_means, offset, scenario.cluster_sigma, eval_rng);
  }
  return out;
}

// ------------------------------------------------------------ feature files

namespace {

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size() && std::isfinite(out);
}

}  // namespace

std::vector<TaskDataset> load_features(const std::string& path, const FeatureFileOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read feature file " + path);

  struct Row {
    std::size_t agent;
    double label;
    std::vector<double> features;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != options.feature_dim + 2) {
      throw ParseError("expected " + std::to_string(options.feature_dim + 2) + " columns, found " +
                           std::to_string(cells.size()),
                       line_no);
    }
    Row row;
    double id = 0.0;
    if (!parse_double(cells[0], id) || id < 0 || id != std::floor(id)) throw ParseError("bad agent id", line_no);
    row.agent = static_cast<std::size_t>(id);
    if (!parse_double(cells[1], row.label)) throw ParseError("bad label", line_no);
    if (options.integer_labels && (row.label < 0 || row.label != std::floor(row.label))) {
      throw ParseError("label must be a non-negative integer", line_no);
    }
    row.features.resize(options.feature_dim);
    for (std::size_t f = 0; f < options.feature_dim; ++f) {
      if (!parse_double(cells[f + 2], row.features[f])) throw ParseError("bad feature value in column " + std::to_string(f + 3), line_no);
    }
    if (options.num_agents != 0 && row.agent >= options.num_agents) {
      throw SchemaError("unknown agent id " + std::to_string(row.agent) + " at line " + std::to_string(line_no));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw EmptyDatasetError("feature file " + path + " has no samples");

  std::size_t n = options.num_agents;
  if (n == 0) {
    for (const auto& r : rows) n = std::max(n, r.agent + 1);
  }
  std::vector<std::size_t> counts(n, 0);
  for (const auto& r : rows) ++counts[r.agent];
  std::vector<TaskDataset> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (counts[i] == 0) throw SchemaError("agent " + std::to_string(i) + " has no samples in " + path);
    out[i].inputs.resize(static_cast<Eigen::Index>(counts[i]), static_cast<Eigen::Index>(options.feature_dim));
    out[i].targets.resize(static_cast<Eigen::Index>(counts[i]));
  }
  std::vector<Eigen::Index> fill(n, 0);
  for (const auto& r : rows) {
    const Eigen::Index s = fill[r.agent]++;
    for (std::size_t f = 0; f < options.feature_dim; ++f) out[r.agent].inputs(s, static_cast<Eigen::Index>(f)) = r.features[f];
    out[r.agent].targets[s] = r.label;
  }
  return out;
}

void write_features(const std::string& path, const std::vector<TaskDataset>& datasets) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write feature file " + path);
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    const auto& d = datasets[i];
    for (Eigen::Index s = 0; s < d.inputs.rows(); ++s) {
      out << i << ',';
      put(d.targets[s]);
      for (Eigen::Index f = 0; f < d.inputs.cols(); ++f) {
        out << ',';
        put(d.inputs(s, f));
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("failed writing feature file " + path);
}

}  // namespace collab
