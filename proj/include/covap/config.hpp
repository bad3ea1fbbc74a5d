#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covap/model.hpp"
#include "covap/perf.hpp"
#include "covap/sim.hpp"
#include "covap/trainer.hpp"

namespace covap {

inline constexpr const char* kVersion = "0.1.0";

// One experiment document shared by every subcommand. Sweeps are declared
// here rather than scripted so a report always names its full input.
struct ExperimentConfig {
  std::string name;
  std::uint64_t seed = 1;
  std::string out_dir;

  ModelSpec model;
  bool has_model = false;

  ClusterConfig cluster;
  PhaseTimes phases;  // totals; comm_ms == 0 means "price it from the cluster"

  CompressorSpec compressor;
  bool covap_auto_interval = false;

  std::vector<std::uint32_t> sweep_ratios;
  std::vector<std::uint32_t> sweep_workers;
  std::uint64_t iterations = 1;

  TrainConfig train;
  bool has_train = false;

  std::optional<double> expected_s_ovlp;
  std::optional<double> expected_s_ls;

  std::string config_hash;  // hash of the source document

  void validate() const;  // throws ConfigError
};

ExperimentConfig config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
ExperimentConfig load_config_file(const std::string& path);

// FNV-1a over the canonical dump; stable across runs of the same document.
std::string hash_json(const nlohmann::json& j);

// Resolves "auto" intervals via the measured ratio; explicit intervals pass
// through unchanged.
std::uint32_t resolve_interval(const ExperimentConfig& config, double ccr_value);

}  // namespace covap
