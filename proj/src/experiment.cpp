#include "covap/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "covap/costs.hpp"
#include "covap/errors.hpp"

namespace covap {

namespace {

double ring_factor(std::uint32_t workers) {
  if (workers <= 1) return 0.0;
  const double p = static_cast<double>(workers);
  return 2.0 * (p - 1.0) / p;
}

// Mean simulated iteration time over one full transmission cycle.
struct CycleResult {
  double mean_total_ms = 0.0;
  double mean_unoverlapped_ms = 0.0;
  std::vector<IterationTimeline> timelines;
};

CycleResult simulate_cycle(const ExperimentConfig& config, const ClusterConfig& cluster,
                           const PhaseTimes& phases, const CompressorSpec& compressor,
                           const BucketPlan& plan, std::uint64_t iterations) {
  CycleResult result;
  for (std::uint64_t step = 0; step < iterations; ++step) {
    const auto inputs =
        build_iteration_inputs(config.model, plan, cluster, phases, compressor, step);
    auto timeline = simulate_iteration(inputs.before_ms, inputs.work, cluster,
                                       compressor.compress_on_stream);
    result.mean_total_ms += timeline.t_total_ms;
    result.mean_unoverlapped_ms += timeline.unoverlapped_comm_ms;
    result.timelines.push_back(std::move(timeline));
  }
  result.mean_total_ms /= static_cast<double>(iterations);
  result.mean_unoverlapped_ms /= static_cast<double>(iterations);
  return result;
}

BucketPlan plan_for_interval(const ExperimentConfig& config, std::uint32_t interval) {
  BucketPlan plan = allocate_buckets(config.model);
  if (config.compressor.scheme == Scheme::kCovap && interval > 1)
    plan = shard_plan(plan, interval);
  return plan;
}

}  // namespace

PhaseTimes resolve_phases(const ExperimentConfig& config) {
  PhaseTimes phases = config.phases;
  if (phases.comp_ms <= 0.0 && config.has_model)
    phases.comp_ms = config.model.total_backward_ms();
  if (phases.comp_ms <= 0.0)
    throw ConfigError("no computation time available: set phases.comp_ms or layer backward_ms");
  if (phases.comm_ms <= 0.0) {
    if (!config.has_model)
      throw ConfigError("no communication time available: set phases.comm_ms or a model");
    const BucketPlan plan = allocate_buckets(config.model);
    double total = 0.0;
    const std::uint32_t width = config.model.layers[0].bytes_per_param;
    for (std::uint64_t numel : effective_numels(plan))
      total += comm_time_ms(numel * width, config.cluster);
    phases.comm_ms = total;
  }
  return phases;
}

ExperimentResult run_experiment(const ExperimentConfig& config, unsigned sweep_parallel) {
  if (!config.has_model) throw ConfigError("experiment needs a model");

  ExperimentResult result;
  result.phases = resolve_phases(config);
  result.report = make_speedup_report(result.phases, config.cluster.workers);
  if (config.expected_s_ovlp)
    add_expected_check(result.report, "s_ovlp", *config.expected_s_ovlp, result.report.s_ovlp);
  if (config.expected_s_ls)
    add_expected_check(result.report, "s_ls", *config.expected_s_ls, result.report.s_ls);

  result.interval = resolve_interval(config, result.report.ccr);
  CompressorSpec compressor = config.compressor;
  compressor.covap.interval = result.interval;

  result.plan = plan_for_interval(config, result.interval);

  // Base iterations with the configured compressor.
  {
    const std::uint64_t iters = std::max<std::uint64_t>(config.iterations, 1);
    auto cycle = simulate_cycle(config, config.cluster, result.phases, compressor, result.plan, iters);
    for (std::uint64_t i = 0; i < cycle.timelines.size(); ++i)
      result.iterations.push_back(
          IterationRecord{result.interval, i, std::move(cycle.timelines[i])});
  }

  const double t_ls = result.phases.before_ms + result.phases.comp_ms;

  // Compression-ratio sweep: each point runs one full transmission cycle.
  if (!config.sweep_ratios.empty()) {
    result.ratio_curve.resize(config.sweep_ratios.size());
    auto eval_point = [&](std::size_t idx) {
      const std::uint32_t ratio = config.sweep_ratios[idx];
      CompressorSpec spec = config.compressor;
      spec.scheme = Scheme::kCovap;
      spec.covap.interval = ratio;
      ExperimentConfig point = config;
      point.compressor = spec;
      const BucketPlan plan = plan_for_interval(point, ratio);
      auto cycle = simulate_cycle(point, config.cluster, result.phases, spec, plan, ratio);
      RatioPoint out;
      out.ratio = ratio;
      out.mean_iteration_ms = cycle.mean_total_ms;
      out.mean_unoverlapped_ms = cycle.mean_unoverlapped_ms;
      out.speedup = static_cast<double>(config.cluster.workers) * t_ls / cycle.mean_total_ms;
      result.ratio_curve[idx] = out;
    };

    const unsigned lanes = std::max(1u, sweep_parallel);
    if (lanes == 1) {
      for (std::size_t i = 0; i < config.sweep_ratios.size(); ++i) eval_point(i);
    } else {
      std::vector<std::thread> pool;
      for (unsigned lane = 0; lane < lanes; ++lane)
        pool.emplace_back([&, lane]() {
          for (std::size_t i = lane; i < config.sweep_ratios.size(); i += lanes) eval_point(i);
        });
      for (auto& t : pool) t.join();
    }
  }

  // Cluster-size sweep across schemes. Declared communication totals scale
  // with the collective's volume factor relative to the configured cluster.
  if (!config.sweep_workers.empty()) {
    const double base_ring = ring_factor(config.cluster.workers);
    for (std::uint32_t workers : config.sweep_workers) {
      ClusterConfig cluster = config.cluster;
      cluster.workers = workers;
      cluster.skew_ms.clear();
      PhaseTimes phases = result.phases;
      if (config.phases.comm_ms > 0.0 && base_ring > 0.0)
        phases.comm_ms = config.phases.comm_ms * ring_factor(workers) / base_ring;
      else if (config.phases.comm_ms <= 0.0) {
        ExperimentConfig scaled = config;
        scaled.cluster = cluster;
        phases = resolve_phases(scaled);
      }

      for (Scheme scheme :
           {Scheme::kNone, Scheme::kCovap, Scheme::kFp16, Scheme::kTopk, Scheme::kRandomk}) {
        CompressorSpec spec = config.compressor;
        spec.scheme = scheme;
        std::uint64_t iters = 1;
        if (scheme == Scheme::kCovap) {
          spec.covap.interval = choose_interval(ccr(phases.comm_ms, phases.comp_ms));
          iters = spec.covap.interval;
        }
        ExperimentConfig point = config;
        point.compressor = spec;
        const BucketPlan plan = plan_for_interval(point, spec.covap.interval);
        auto cycle = simulate_cycle(point, cluster, phases, spec, plan, iters);
        ScalingRow row;
        row.workers = workers;
        row.scheme = scheme_name(scheme);
        row.iteration_ms = cycle.mean_total_ms;
        row.speedup = static_cast<double>(workers) * t_ls / cycle.mean_total_ms;
        result.scaling.push_back(std::move(row));
      }
    }
  }

  // Reference-cost comparison rows for the report.
  for (const auto& cost : baseline_cost_table()) {
    const auto scaled = scaled_baseline_cost(cost.scheme, config.model.total_params());
    GcComparisonRow row;
    row.scheme = cost.scheme;
    row.compress_ms = scaled->compress_ms;
    row.comm_gc_ms = std::max(0.0, result.phases.comm_ms - scaled->comm_reduction_ms);
    row.t_gc_ms = t_gc(result.phases.before_ms, result.phases.comp_ms, row.compress_ms, row.comm_gc_ms);
    row.t_gc_ovlp_ms =
        t_gc_ovlp(result.phases.before_ms, result.phases.comp_ms, row.compress_ms, row.comm_gc_ms);
    row.s_gc = result.report.t_dp_ms / row.t_gc_ms;
    row.s_gc_ovlp = result.report.t_dp_ms / row.t_gc_ovlp_ms;
    result.gc_rows.push_back(std::move(row));
  }

  return result;
}

}  // namespace covap
