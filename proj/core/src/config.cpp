#include "collab/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "collab/digest.hpp"
#include "collab/errors.hpp"

namespace collab {

using nlohmann::json;

std::string to_string(TaskKind kind) { return kind == TaskKind::regression ? "regression" : "classification"; }

TaskKind parse_task(const std::string& text) {
  if (text == "regression") return TaskKind::regression;
  if (text == "classification") return TaskKind::classification;
  throw ConfigError("unknown task '" + text + "' (expected regression or classification)");
}

std::string to_string(TransportKind kind) { return kind == TransportKind::memory ? "memory" : "socket"; }

TransportKind parse_transport(const std::string& text) {
  if (text == "memory") return TransportKind::memory;
  if (text == "socket") return TransportKind::socket;
  throw ConfigError("unknown transport '" + text + "' (expected memory or socket)");
}

namespace {

std::string to_string(GradientMode m) { return m == GradientMode::analytic ? "analytic" : "finite-difference"; }
std::string to_string(LossReduction r) { return r == LossReduction::mean ? "mean" : "sum"; }
std::string to_string(FitMethod m) { return m == FitMethod::newton ? "newton" : "gradient-descent"; }

template <typename T>
T get(const json& j, const char* key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults_for(TaskKind task) {
  ExperimentConfig c;
  c.task = task;
  if (task == TaskKind::regression) {
    c.lambda1 = 3.0;
    c.refresh_interval = 10;
    c.train_learning_rate = 0.5;
    c.train_epochs = 600;
  } else {
    c.lambda1 = 0.05;
    c.refresh_interval = 200;
    c.gradient_mode = GradientMode::analytic;
  }
  c.rounds = 2 * c.refresh_interval;
  return c;
}

void apply_overrides(ExperimentConfig& c, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");

  bool rounds_given = false;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    const char* k = key.c_str();
    if (key == "task") c.task = parse_task(get<std::string>(v, k));
    else if (key == "method") c.method = parse_method(get<std::string>(v, k));
    else if (key == "num_agents") c.num_agents = get<std::size_t>(v, k);
    else if (key == "lambda1") c.lambda1 = get<double>(v, k);
    else if (key == "lambda2") c.lambda2 = get<double>(v, k);
    else if (key == "unroll_steps") c.unroll_steps = get<std::size_t>(v, k);
    else if (key == "rounds") { c.rounds = get<std::size_t>(v, k); rounds_given = true; }
    else if (key == "refresh_interval") c.refresh_interval = get<std::size_t>(v, k);
    else if (key == "gamma") c.gamma = get<double>(v, k);
    else if (key == "seeds") c.seeds = get<std::vector<std::uint64_t>>(v, k);
    else if (key == "train_seeds") c.train_seeds = get<std::vector<std::uint64_t>>(v, k);
    else if (key == "transport") c.transport = parse_transport(get<std::string>(v, k));
    else if (key == "out_dir") c.out_dir = get<std::string>(v, k);
    else if (key == "workers") c.workers = get<std::size_t>(v, k);
    else if (key == "dual_stepsize") c.dual.stepsize = get<double>(v, k);
    else if (key == "dual_tol") c.dual.tol = get<double>(v, k);
    else if (key == "dual_max_iters") c.dual.max_iters = get<std::size_t>(v, k);
    else if (key == "fit_max_iters") c.fit.max_iters = get<std::size_t>(v, k);
    else if (key == "fit_grad_tol") c.fit.grad_tol = get<double>(v, k);
    else if (key == "fit_method") {
      const auto s = get<std::string>(v, k);
      if (s == "newton") c.fit.method = FitMethod::newton;
      else if (s == "gradient-descent") c.fit.method = FitMethod::gradient_descent;
      else throw ConfigError("fit_method must be newton or gradient-descent");
    } else if (key == "loss_reduction") {
      const auto s = get<std::string>(v, k);
      if (s == "mean") c.loss_reduction = LossReduction::mean;
      else if (s == "sum") c.loss_reduction = LossReduction::sum;
      else throw ConfigError("loss_reduction must be mean or sum");
    } else if (key == "train_epochs") c.train_epochs = get<std::size_t>(v, k);
    else if (key == "train_learning_rate") c.train_learning_rate = get<double>(v, k);
    else if (key == "gradient_mode") {
      const auto s = get<std::string>(v, k);
      if (s == "analytic") c.gradient_mode = GradientMode::analytic;
      else if (s == "finite-difference") c.gradient_mode = GradientMode::finite_difference;
      else throw ConfigError("gradient_mode must be analytic or finite-difference");
    } else if (key == "fd_relative_step") c.fd_relative_step = get<double>(v, k);
    else if (key == "full_horizon") c.full_horizon = get<bool>(v, k);
    else if (key == "p_init_scale") c.p_init_scale = get<double>(v, k);
    else if (key == "lines") {
      const auto lines = get<std::vector<std::vector<double>>>(v, k);
      c.regression.lines.clear();
      for (const auto& l : lines) {
        if (l.size() != 2) throw ConfigError("each line is [slope, intercept]");
        c.regression.lines.push_back({l[0], l[1]});
      }
    } else if (key == "x_lo") c.regression.x_lo = get<double>(v, k);
    else if (key == "x_hi") c.regression.x_hi = get<double>(v, k);
    else if (key == "noise_sigma") c.regression.noise_sigma = get<double>(v, k);
    else if (key == "samples_per_agent") {
      const auto n = get<std::size_t>(v, k);
      (c.task == TaskKind::regression ? c.regression.samples_per_agent : c.classification.samples_per_agent) = n;
    } else if (key == "feature_dim") c.classification.feature_dim = get<std::size_t>(v, k);
    else if (key == "num_classes") c.classification.num_classes = get<std::size_t>(v, k);
    else if (key == "num_groups") c.classification.num_groups = get<std::size_t>(v, k);
    else if (key == "sample_jitter") c.classification.sample_jitter = get<std::size_t>(v, k);
    else if (key == "dirichlet_concentration") c.classification.dirichlet_concentration = get<double>(v, k);
    else if (key == "cluster_radius") c.classification.cluster_radius = get<double>(v, k);
    else if (key == "cluster_sigma") c.classification.cluster_sigma = get<double>(v, k);
    else if (key == "eval_per_class") c.classification.eval_per_class = get<std::size_t>(v, k);
    else if (key == "l2_reg") c.l2_reg = get<double>(v, k);
    else if (key == "features_file") c.features_file = get<std::string>(v, k);
    else if (key == "test_features_file") c.test_features_file = get<std::string>(v, k);
    else if (key == "group_of") c.group_of = get<std::vector<int>>(v, k);
    else throw ConfigError("unknown config key '" + key + "'");
  }
  if (j.contains("refresh_interval") && !rounds_given) c.rounds = 2 * c.refresh_interval;
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  TaskKind task = TaskKind::regression;
  if (j.is_object() && j.contains("task")) task = parse_task(get<std::string>(j["task"], "task"));
  ExperimentConfig c = defaults_for(task);
  apply_overrides(c, text);
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

void ExperimentConfig::validate() const {
  if (num_agents < 2) throw ConfigError("num_agents must be >= 2");
  hyperparams().validate();
  if (method == Method::original_gl && !(lambda1 > 0.0)) throw ConfigError("original-gl needs lambda1 > 0");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (!(train_learning_rate >= 0.0)) throw ConfigError("train_learning_rate must be non-negative");
  if (!(fd_relative_step > 0.0)) throw ConfigError("fd_relative_step must be positive");
  if (!(p_init_scale > 0.0)) throw ConfigError("p_init_scale must be positive");
  for (auto s : train_seeds) {
    for (auto t : seeds) {
      if (s == t) throw ConfigError("train_seeds must be disjoint from test seeds (seed " + std::to_string(s) + ")");
    }
  }
  if (full_horizon && rounds % refresh_interval != 0) {
    throw ConfigError("full-horizon training needs T1 to be a multiple of T2");
  }
  if (task == TaskKind::regression) {
    RegressionScenario r = regression;
    r.num_agents = num_agents;
    r.validate();
  } else {
    ClassificationScenario s = classification;
    s.num_agents = num_agents;
    if (!features_file) s.validate();
    if (!(l2_reg >= 0.0)) throw ConfigError("l2_reg must be non-negative");
  }
  if (!group_of.empty() && group_of.size() != num_agents) throw ConfigError("group_of must list every agent");
}

Hyperparams ExperimentConfig::hyperparams() const {
  Hyperparams h;
  h.lambda1 = lambda1;
  h.lambda2 = lambda2;
  h.unroll_steps = unroll_steps;
  h.rounds = rounds;
  h.refresh_interval = refresh_interval;
  h.dual_stepsize = dual.stepsize;
  h.tolerance = dual.tol;
  return h;
}

std::string ExperimentConfig::canonical_json() const {
  nlohmann::ordered_json j;
  j["task"] = to_string(task);
  j["method"] = to_string(method);
  j["num_agents"] = num_agents;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["unroll_steps"] = unroll_steps;
  j["rounds"] = rounds;
  j["refresh_interval"] = refresh_interval;
  j["gamma"] = gamma;
  j["seeds"] = seeds;
  j["train_seeds"] = train_seeds;
  j["transport"] = to_string(transport);
  j["dual_stepsize"] = dual.stepsize;
  j["dual_tol"] = dual.tol;
  j["dual_max_iters"] = dual.max_iters;
  j["fit_max_iters"] = fit.max_iters;
  j["fit_grad_tol"] = fit.grad_tol;
  j["fit_method"] = to_string(fit.method);
  j["loss_reduction"] = to_string(loss_reduction);
  j["train_epochs"] = train_epochs;
  j["train_learning_rate"] = train_learning_rate;
  j["gradient_mode"] = to_string(gradient_mode);
  j["fd_relative_step"] = fd_relative_step;
  j["full_horizon"] = full_horizon;
  j["p_init_scale"] = p_init_scale;
  if (task == TaskKind::regression) {
    json lines = json::array();
    for (const auto& l : regression.lines) lines.push_back({l.slope, l.intercept});
    j["lines"] = lines;
    j["x_lo"] = regression.x_lo;
    j["x_hi"] = regression.x_hi;
    j["noise_sigma"] = regression.noise_sigma;
    j["samples_per_agent"] = regression.samples_per_agent;
  } else {
    j["feature_dim"] = classification.feature_dim;
    j["num_classes"] = classification.num_classes;
    j["num_groups"] = classification.num_groups;
    j["samples_per_agent"] = classification.samples_per_agent;
    j["sample_jitter"] = classification.sample_jitter;
    j["dirichlet_concentration"] = classification.dirichlet_concentration;
    j["cluster_radius"] = classification.cluster_radius;
    j["cluster_sigma"] = classification.cluster_sigma;
    j["eval_per_class"] = classification.eval_per_class;
    j["l2_reg"] = l2_reg;
    if (features_file) j["features_file"] = *features_file;
    if (test_features_file) j["test_features_file"] = *test_features_file;
  }
  if (!group_of.empty()) j["group_of"] = group_of;
  return j.dump();
}

std::string ExperimentConfig::digest() const { return digest_hex(canonical_json()); }

std::string ExperimentConfig::describe() const {
  std::ostringstream out;
  const auto j = nlohmann::ordered_json::parse(canonical_json());
  for (auto it = j.begin(); it != j.end(); ++it) out << "  " << it.key() << " = " << it.value().dump() << '\n';
  out << "  config_digest = " << digest() << '\n';
  return out.str();
}

}  // namespace collab
