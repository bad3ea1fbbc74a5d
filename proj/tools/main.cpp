#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "covap/config.hpp"
#include "covap/errors.hpp"
#include "covap/experiment.hpp"
#include "covap/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kDivergence = 3;
constexpr int kInternalError = 4;

int log_level() {
  const char* env = std::getenv("COVAP_SIM_LOG");
  if (env == nullptr) return 0;
  const std::string value(env);
  if (value == "debug") return 2;
  if (value == "info") return 1;
  return 0;
}

void log_info(const std::string& message) {
  if (log_level() >= 1) std::cerr << "[covap] " << message << '\n';
}

struct Options {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned sweep_parallel = 1;
  std::string format = "table";
};

std::string output_dir(const Options& opts, const covap::ExperimentConfig& config) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (!config.out_dir.empty()) return config.out_dir;
  return "out/" + config.name;
}

covap::ExperimentConfig load(const Options& opts) {
  auto config = covap::load_config_file(opts.config_path);
  if (opts.seed_set) {
    config.seed = opts.seed;
    config.train.seed = opts.seed;
  }
  return config;
}

covap::Provenance provenance(const covap::ExperimentConfig& config, const std::string& command) {
  covap::Provenance p;
  p.config_hash = config.config_hash;
  p.seed = config.seed;
  p.version = covap::kVersion;
  p.command = command;
  return p;
}

void emit(const Options& opts, const nlohmann::json& doc, const std::string& table) {
  if (opts.format == "json") {
    std::cout << doc.dump(2) << '\n';
  } else if (opts.format == "csv") {
    std::cout << doc.dump() << '\n';
  } else {
    std::cout << table;
  }
}

int cmd_profile(const Options& opts) {
  const auto config = load(opts);
  const auto phases = covap::resolve_phases(config);
  const auto plan = covap::allocate_buckets(config.model);

  covap::CompressorSpec dense;
  const auto inputs =
      covap::build_iteration_inputs(config.model, plan, config.cluster, phases, dense, 0);
  const auto timeline = covap::simulate_iteration(inputs.before_ms, inputs.work, config.cluster);
  const auto views = covap::worker_views(timeline, config.cluster.workers);
  const auto profile = covap::profile_ccr(views, config.cluster.workers);

  auto doc = covap::profile_to_json(profile);
  doc["provenance"] = covap::provenance_to_json(provenance(config, "profile"));

  const std::string dir = output_dir(opts, config);
  covap::write_text_file(dir + "/profile.json", doc.dump(2) + "\n");

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"ccr", covap::format_ms(profile.ccr)});
  rows.push_back({"comp_ms", covap::format_ms(profile.comp_ms)});
  rows.push_back({"comm_aligned_ms", covap::format_ms(profile.comm_aligned_ms)});
  rows.push_back({"recommended_interval", std::to_string(profile.recommended_interval)});
  emit(opts, doc, covap::format_table({"metric", "value"}, rows));
  return kOk;
}

int run_report_command(const Options& opts, bool with_simulation, const std::string& command) {
  const auto config = load(opts);
  const auto result = covap::run_experiment(config, opts.sweep_parallel);
  const auto doc = covap::experiment_to_json(result, provenance(config, command));

  const std::string dir = output_dir(opts, config);
  covap::write_text_file(dir + "/report.json", doc.dump(2) + "\n");
  covap::write_iterations_csv(dir + "/iterations.csv", result.iterations);
  if (with_simulation) {
    covap::write_trace_csv(dir + "/trace.csv", result.iterations);
    covap::write_chrome_trace(dir + "/chrome_trace.json", result.iterations);
  }
  if (!result.ratio_curve.empty()) covap::write_ratio_csv(dir + "/ratio_sweep.csv", result.ratio_curve);
  if (!result.scaling.empty()) covap::write_scaling_csv(dir + "/scaling.csv", result.scaling);

  std::ostringstream tables;
  {
    const auto& r = result.report;
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"ccr", covap::format_ms(r.ccr)});
    rows.push_back({"t_dp_ms", covap::format_ms(r.t_dp_ms)});
    rows.push_back({"t_dp_ls_ms", covap::format_ms(r.t_dp_ls_ms)});
    rows.push_back({"t_ovlp_ms", covap::format_ms(r.t_ovlp_ms)});
    rows.push_back({"s_ovlp", covap::format_ms(r.s_ovlp)});
    rows.push_back({"s_ls", covap::format_ms(r.s_ls)});
    rows.push_back({"interval", std::to_string(result.interval)});
    rows.push_back({"effective_tensors", std::to_string(covap::effective_numels(result.plan).size())});
    tables << covap::format_table({"metric", "value"}, rows);
    for (const auto& check : r.expected_checks) {
      tables << (check.consistent ? "consistent: " : "INCONSISTENT: ") << check.metric
             << " expected " << covap::format_ms(check.expected) << " computed "
             << covap::format_ms(check.computed) << '\n';
    }
  }
  if (!result.ratio_curve.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& point : result.ratio_curve)
      rows.push_back({std::to_string(point.ratio), covap::format_ms(point.mean_iteration_ms),
                      covap::format_ms(point.speedup)});
    tables << '\n' << covap::format_table({"ratio", "iteration_ms", "speedup"}, rows);
  }
  if (!result.scaling.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : result.scaling)
      rows.push_back({std::to_string(row.workers), row.scheme,
                      covap::format_ms(row.iteration_ms), covap::format_ms(row.speedup)});
    tables << '\n' << covap::format_table({"workers", "scheme", "iteration_ms", "speedup"}, rows);
  }

  emit(opts, doc, tables.str());
  log_info("wrote " + dir);
  return kOk;
}

int cmd_train(const Options& opts) {
  const auto config = load(opts);
  if (!config.has_train) throw covap::ConfigError("config has no 'train' section");

  const auto run = covap::train(config.train);
  const auto doc = covap::train_summary_to_json(run, provenance(config, "train"));

  const std::string dir = output_dir(opts, config);
  covap::write_train_csv(dir + "/train.csv", run);
  covap::write_text_file(dir + "/train_summary.json", doc.dump(2) + "\n");

  std::vector<std::vector<std::string>> rows;
  rows.push_back({"steps", std::to_string(run.steps_completed)});
  rows.push_back({"final_loss", covap::format_ms(run.final_loss)});
  rows.push_back({"diverged", run.diverged ? "yes" : "no"});
  emit(opts, doc, covap::format_table({"metric", "value"}, rows));

  return run.diverged ? kDivergence : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlap-aware gradient compression simulator and trainer"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opts;
  app.add_option("-c,--config", opts.config_path, "experiment config JSON")->required();
  app.add_option("-o,--out", opts.out_dir, "output directory");
  auto* seed_opt = app.add_option("-s,--seed", opts.seed, "override the config seed");
  app.add_option("--sweep-parallel", opts.sweep_parallel, "threads for sweep points");
  app.add_option("--format", opts.format, "stdout format: table, json or csv")
      ->check(CLI::IsMember({"table", "json", "csv"}));

  auto* profile = app.add_subcommand("profile", "measure CCR from one simulated iteration");
  auto* plan = app.add_subcommand("plan", "bucket plan and closed-form speedup report");
  auto* simulate = app.add_subcommand("simulate", "event-driven iteration simulation and sweeps");
  auto* train_cmd = app.add_subcommand("train", "desk-scale data-parallel training");

  CLI11_PARSE(app, argc, argv);
  opts.seed_set = seed_opt->count() > 0;

  try {
    if (profile->parsed()) return cmd_profile(opts);
    if (plan->parsed()) return run_report_command(opts, false, "plan");
    if (simulate->parsed()) return run_report_command(opts, true, "simulate");
    if (train_cmd->parsed()) return cmd_train(opts);
  } catch (const covap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const covap::InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const covap::Error& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternalError;
  }
  return kOk;
}
