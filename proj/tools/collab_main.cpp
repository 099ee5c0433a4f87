// collab: scenario generation, P training, single-method runs and comparisons.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "collab/config.hpp"
#include "collab/errors.hpp"
#include "collab/experiment.hpp"

namespace {

struct Options {
  std::string task;
  std::string method;
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string p_file;
  std::string transport;
  std::size_t workers = 0;
  std::vector<std::string> overrides;
};

collab::ExperimentConfig resolve(const Options& o) {
  collab::ExperimentConfig config;
  if (!o.config_path.empty()) {
    config = collab::ExperimentConfig::load(o.config_path);
    if (!o.task.empty() && collab::parse_task(o.task) != config.task) {
      throw collab::ConfigError("--task conflicts with the task in " + o.config_path);
    }
  } else {
    config = collab::ExperimentConfig::defaults_for(o.task.empty() ? collab::TaskKind::regression
                                                                    : collab::parse_task(o.task));
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw collab::ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string value = kv.substr(eq + 1);
    nlohmann::json j;
    try {
      j[key] = nlohmann::json::parse(value);
    } catch (const nlohmann::json::parse_error&) {
      j[key] = value;
    }
    collab::apply_overrides(config, j.dump());
  }
  if (!o.method.empty()) config.method = collab::parse_method(o.method);
  if (!o.seeds.empty()) config.seeds = o.seeds;
  if (!o.out.empty()) config.out_dir = o.out;
  if (!o.transport.empty()) config.transport = collab::parse_transport(o.transport);
  if (o.workers > 0) config.workers = o.workers;
  config.validate();
  return config;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const collab::ConfigError*>(&e)) return 2;
  if (dynamic_cast<const collab::ConvergenceError*>(&e)) return 3;
  if (dynamic_cast<const collab::IoError*>(&e)) return 4;
  // A round that failed mid-experiment is reported with the convergence code.
  if (dynamic_cast<const collab::ExperimentError*>(&e)) return 3;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative learning with learned collaboration graphs"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--task", o.task, "regression | classification");
    sub->add_option("--config", o.config_path, "JSON config file (flat schema)");
    sub->add_option("--seed", o.seeds, "Seed list, e.g. --seed 1 2 3")->delimiter(',');
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--workers", o.workers, "Worker threads");
    sub->add_option("--set", o.overrides, "Override a config key, key=value (repeatable)");
  };

  auto* generate = app.add_subcommand("generate", "Write scenario files for each seed");
  add_common(generate);
  auto* train = app.add_subcommand("train", "Train the importance diagonal P on the training seeds");
  add_common(train);
  auto* run = app.add_subcommand("run", "Run one method on each seed and write its artifacts");
  add_common(run);
  run->add_option("--method", o.method, "no-colla | original-gl | unrolled-gl | fixed-colla");
  run->add_option("--p-file", o.p_file, "Trained P file (unrolled-gl)");
  run->add_option("--transport", o.transport, "memory | socket");
  auto* compare = app.add_subcommand("compare", "Run all four methods and write the comparison table");
  add_common(compare);
  compare->add_option("--p-file", o.p_file, "Trained P file; trained first when omitted");
  compare->add_option("--transport", o.transport, "memory | socket");

  CLI11_PARSE(app, argc, argv);

  try {
    const collab::ExperimentConfig config = resolve(o);
    std::cout << config.describe() << std::flush;
    const std::optional<std::string> p_file = o.p_file.empty() ? std::nullopt : std::optional(o.p_file);
    if (generate->parsed()) {
      collab::cmd_generate(config, std::cout);
    } else if (train->parsed()) {
      collab::cmd_train(config, std::cout);
    } else if (run->parsed()) {
      collab::cmd_run(config, p_file, std::cout);
    } else if (compare->parsed()) {
      const auto table = collab::cmd_compare(config, p_file, std::cout);
      for (const auto& r : table.runs) {
        if (r.failure) std::cerr << "warning: " << collab::to_string(r.method) << " seed " << r.seed
                                 << " failed: " << *r.failure << "\n";
      }
    }
  } catch (const collab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
