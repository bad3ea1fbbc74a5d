#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covap/compress.hpp"
#include "covap/model.hpp"
#include "covap/sim.hpp"

namespace covap {

enum class Objective { kLinearRegression, kLogisticRegression, kTwoLayerMlp };

Objective objective_from_name(const std::string& name);
const char* objective_name(Objective objective);

// A small numerically real model whose flat parameter vector is partitioned
// into effective tensors by a bucket plan over synthetic layer sizes.
struct ToyModelSpec {
  Objective objective = Objective::kLinearRegression;
  std::vector<std::uint64_t> layer_sizes;  // parameter split; sum = dimension
  std::uint64_t bucket_cap_bytes = 4096;
  std::uint64_t mlp_hidden = 16;           // two-layer-mlp only

  std::uint64_t dimension() const;
};

struct TrainConfig {
  ToyModelSpec model;
  std::uint32_t workers = 4;
  std::uint64_t steps = 500;
  std::uint64_t samples_per_worker = 256;
  double learning_rate = 0.1;
  double noise_std = 0.0;
  std::uint64_t seed = 1;
  bool threaded = false;

  CompressorSpec compressor;  // kNone, kCovap, kTopk, kRandomk or kFp16
};

struct TrainRun {
  std::vector<double> losses;              // global loss before each step
  double final_loss = 0.0;                 // global loss after the last step
  std::vector<double> final_params;
  std::vector<std::uint64_t> bytes_per_step;
  bool diverged = false;
  std::uint64_t steps_completed = 0;

  // Per-step squared drop and squared norm of the filtered gradient on worker
  // zero (transmission-interval schemes only), for the contraction audit.
  std::vector<double> contraction_drop_sq;
  std::vector<double> contraction_norm_sq;
};

// Element-wise mean over per-worker vectors, combined in worker order 0..P-1
// so the result does not depend on scheduling.
std::vector<double> allreduce_mean(const std::vector<std::vector<double>>& per_worker);

TrainRun train(const TrainConfig& config);

struct ContractionAudit {
  std::vector<double> windowed_ratios;  // mean drop/norm ratio per full window
  double max_windowed = 0.0;
  double max_single = 0.0;
};

// Phase-averaged contraction ratios over windows of `interval` steps.
ContractionAudit contraction_audit(const TrainRun& run, std::uint32_t interval);

}  // namespace covap
