#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covap/config.hpp"
#include "covap/perf.hpp"
#include "covap/sim.hpp"

namespace covap {

struct IterationRecord {
  std::uint32_t ratio = 1;  // transmission interval in effect
  std::uint64_t iter = 0;
  IterationTimeline timeline;
};

struct RatioPoint {
  std::uint32_t ratio = 1;
  double mean_iteration_ms = 0.0;
  double mean_unoverlapped_ms = 0.0;
  double speedup = 0.0;  // vs a single device, upper bound = worker count
};

struct ScalingRow {
  std::uint32_t workers = 0;
  std::string scheme;
  double iteration_ms = 0.0;
  double speedup = 0.0;
};

struct GcComparisonRow {
  std::string scheme;
  double compress_ms = 0.0;
  double comm_gc_ms = 0.0;
  double t_gc_ms = 0.0;
  double t_gc_ovlp_ms = 0.0;
  double s_gc = 0.0;
  double s_gc_ovlp = 0.0;
};

struct ExperimentResult {
  PhaseTimes phases;  // resolved totals actually used
  SpeedupReport report;
  BucketPlan plan;
  std::uint32_t interval = 1;  // resolved transmission interval
  std::vector<IterationRecord> iterations;
  std::vector<RatioPoint> ratio_curve;
  std::vector<ScalingRow> scaling;
  std::vector<GcComparisonRow> gc_rows;
};

// Fills in whatever the config asks for: the base timing report and plan, the
// configured number of simulated iterations, plus ratio and cluster-size
// sweeps when declared. Deterministic for a given config; sweep points may be
// evaluated on up to `sweep_parallel` threads and are merged in config order.
ExperimentResult run_experiment(const ExperimentConfig& config, unsigned sweep_parallel = 1);

// Resolved phase totals: declared values win, otherwise derived from the
// model's layer times and the cluster's collective cost.
PhaseTimes resolve_phases(const ExperimentConfig& config);

}  // namespace covap
