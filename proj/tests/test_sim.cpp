#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "covap/errors.hpp"
#include "covap/experiment.hpp"
#include "covap/rng.hpp"
#include "covap/sim.hpp"

using namespace covap;

namespace {

ClusterConfig workers_only(std::uint32_t workers) {
  ClusterConfig cluster;
  cluster.workers = workers;
  return cluster;
}

std::vector<TensorWork> uniform_work(std::size_t b, double comp_total, double comm_total) {
  std::vector<TensorWork> work(b);
  for (auto& t : work) {
    t.comp_ms = comp_total / static_cast<double>(b);
    t.comm_ms = comm_total / static_cast<double>(b);
    t.wire_bytes = 1000;
  }
  return work;
}

void select_covap(std::vector<TensorWork>& work, std::uint32_t interval, std::uint64_t step) {
  const auto selected = select_tensors(step, interval, work.size());
  for (auto& t : work) t.communicate = false;
  for (std::size_t t : selected) work[t].communicate = true;
}

ExperimentConfig uniform_experiment(std::size_t layers, double before, double comp, double comm) {
  ExperimentConfig config;
  config.has_model = true;
  for (std::size_t i = 0; i < layers; ++i)
    config.model.layers.push_back({"l" + std::to_string(i), 1000, 4, 0.0});
  config.model.bucket_cap_bytes = 4000;
  config.cluster.workers = 64;
  config.phases.before_ms = before;
  config.phases.comp_ms = comp;
  config.phases.comm_ms = comm;
  return config;
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("collective cost model") {
  ClusterConfig cluster;
  cluster.workers = 4;
  cluster.bandwidth_bps = 1e9;
  cluster.latency_ms = 2.5;
  cluster.allreduce_efficiency = 1.0;

  CHECK(comm_time_ms(0, cluster) == 2.5);

  const double t1 = comm_time_ms(1'000'000, cluster) - cluster.latency_ms;
  cluster.bandwidth_bps = 2e9;
  const double t2 = comm_time_ms(1'000'000, cluster) - cluster.latency_ms;
  CHECK(t1 == doctest::Approx(2.0 * t2).epsilon(1e-12));

  // Volume term: 2*(P-1)/P * bits / bandwidth.
  cluster.bandwidth_bps = 1e9;
  cluster.latency_ms = 0.0;
  CHECK(comm_time_ms(1'000'000, cluster) ==
        doctest::Approx(1.5 * 8e6 / 1e9 * 1000.0).epsilon(1e-12));

  ClusterConfig solo = workers_only(1);
  solo.latency_ms = 1.0;
  CHECK(comm_time_ms(123456, solo) == 1.0);  // nothing to exchange
}

TEST_CASE("fitted efficiency reproduces the measured per-tensor shares") {
  // Measured collective times for the reference six-bucket model: 830.094 ms
  // total, 603.238 ms (72.67%) for the 107.5M-element bucket.
  const std::vector<std::uint64_t> numels = {4101096, 16781312, 107480576,
                                             7079424,  7669760,  555072};
  std::uint64_t total_bytes = 0;
  for (auto n : numels) total_bytes += n * 4;

  ClusterConfig cluster;
  cluster.workers = 64;
  cluster.bandwidth_bps = 30e9;
  cluster.latency_ms = 5.0;

  const double target_total = 830.094;
  const double volume_budget = target_total - 6.0 * cluster.latency_ms;
  const double ring = 2.0 * 63.0 / 64.0;
  // latency + ring * bytes * 8 / (bw * eff) * 1000 summed over buckets = target
  cluster.allreduce_efficiency =
      ring * static_cast<double>(total_bytes) * 8.0 * 1000.0 /
      (cluster.bandwidth_bps * volume_budget);
  REQUIRE(cluster.allreduce_efficiency > 0.0);
  REQUIRE(cluster.allreduce_efficiency <= 1.0);

  double total = 0.0;
  std::vector<double> times;
  for (auto n : numels) {
    times.push_back(comm_time_ms(n * 4, cluster));
    total += times.back();
  }
  CHECK(total == doctest::Approx(target_total).epsilon(1e-9));
  CHECK(times[2] / total == doctest::Approx(0.7267).epsilon(0.01 / 0.7267));
}

TEST_CASE("dense uniform iteration matches the totals approximation exactly") {
  const auto work = uniform_work(8, 135.0, 280.0);
  const auto timeline = simulate_iteration(55.0, work, workers_only(1));
  CHECK(timeline.t_total_ms == 335.0);
  CHECK(timeline.unoverlapped_comm_ms == 145.0);
  CHECK(timeline.bubbles.empty());
}

TEST_CASE("aligned transmission interval hides all communication") {
  // 24 uniform tensors, twice as much communication as computation.
  auto work = uniform_work(24, 135.0, 270.0);
  select_covap(work, 2, 0);
  const auto timeline = simulate_iteration(55.0, work, workers_only(1));
  CHECK(timeline.t_total_ms == 190.0);
  CHECK(timeline.unoverlapped_comm_ms == 0.0);

  auto work2 = uniform_work(24, 135.0, 280.0);
  select_covap(work2, 3, 0);
  const auto t2 = simulate_iteration(55.0, work2, workers_only(1));
  CHECK(t2.t_total_ms == 190.0);
  CHECK(t2.unoverlapped_comm_ms == 0.0);
}

TEST_CASE("a tensor count not divisible by the interval leaves a small tail") {
  auto work = uniform_work(8, 135.0, 280.0);
  select_covap(work, 3, 0);  // keeps tensors 0, 3, 6
  const auto timeline = simulate_iteration(55.0, work, workers_only(1));
  // The last kept tensor leaves the stream at 55 + 6*16.875 and its 35 ms
  // transfer outlives the remaining 33.75 ms of computation.
  CHECK(timeline.t_total_ms == doctest::Approx(191.25).epsilon(1e-12));
  CHECK(timeline.unoverlapped_comm_ms == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("side-lane compression delays only its own tensor") {
  std::vector<TensorWork> work(2);
  work[0] = TensorWork{10.0, 5.0, 1.0, true, 8};
  work[1] = TensorWork{10.0, 5.0, 1.0, true, 8};

  const auto serialized = simulate_iteration(0.0, work, workers_only(1), true);
  CHECK(serialized.t_total_ms == 30.0);  // compress blocks extend the stream

  const auto side_lane = simulate_iteration(0.0, work, workers_only(1), false);
  CHECK(side_lane.t_total_ms == 20.0);  // stream is compute only
  // Transfers wait for their own compression: tensor 0 at 5, tensor 1 at 15.
  double first_comm_start = -1.0;
  for (const auto& e : side_lane.events)
    if (e.kind == EventKind::kCommStart && e.tensor == 0) first_comm_start = e.time_ms;
  CHECK(first_comm_start == 5.0);
}

TEST_CASE("compute-bound iteration ends with the stream and shows bubbles") {
  const auto work = uniform_work(3, 60.0, 30.0);
  const auto timeline = simulate_iteration(5.0, work, workers_only(1));
  CHECK(timeline.t_total_ms == 65.0);
  CHECK(timeline.unoverlapped_comm_ms == 0.0);
  CHECK_FALSE(timeline.bubbles.empty());
}

TEST_CASE("event loop equals the closed-form schedule on arbitrary inputs") {
  SplitMix64 rng(29);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t b = 1 + rng.next_below(20);
    const double before = static_cast<double>(rng.next_below(256)) * 0.25;
    std::vector<TensorWork> work(b);
    std::vector<double> comp(b), compress(b), comm(b);
    std::vector<bool> mask(b);
    for (std::size_t i = 0; i < b; ++i) {
      comp[i] = static_cast<double>(1 + rng.next_below(160)) * 0.25;
      compress[i] = static_cast<double>(rng.next_below(16)) * 0.25;
      comm[i] = static_cast<double>(1 + rng.next_below(320)) * 0.25;
      mask[i] = rng.next_below(4) != 0;
      work[i] = TensorWork{comp[i], compress[i], comm[i], mask[i], 64};
    }
    const auto sched = overlap_schedule(before, comp, compress, comm, mask);
    const std::uint32_t workers = 1 + static_cast<std::uint32_t>(rng.next_below(4));
    const auto timeline = simulate_iteration(before, work, workers_only(workers));
    CHECK(timeline.t_total_ms == sched.total_ms);
    CHECK(timeline.unoverlapped_comm_ms == sched.unoverlapped_comm_ms);
    REQUIRE(timeline.bubbles.size() == sched.bubbles.size());
    for (std::size_t i = 0; i < sched.bubbles.size(); ++i) {
      CHECK(timeline.bubbles[i].after_tensor == sched.bubbles[i].after_tensor);
      CHECK(timeline.bubbles[i].duration_ms == sched.bubbles[i].duration_ms);
    }
  }
}

TEST_CASE("uniform configs match the totals approximation to nanoseconds") {
  SplitMix64 rng(37);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t b = 2 + rng.next_below(40);
    const double before = rng.next_unit() * 120.0;
    const double comp = 1.0 + rng.next_unit() * 250.0;
    const double ratio = 1.0 + rng.next_unit() * 5.0;
    const double comm = comp * ratio;
    const auto timeline = simulate_iteration(before, uniform_work(b, comp, comm), workers_only(1));
    const double expected = before + comp + std::max(0.0, (ratio - 1.0) * comp);
    CHECK(std::abs(timeline.t_total_ms - expected) < 1e-9);
  }
}

TEST_CASE("per-worker collectives never overlap") {
  SplitMix64 rng(43);
  std::vector<TensorWork> work(12);
  for (auto& t : work) {
    t.comp_ms = rng.next_unit() * 10;
    t.comm_ms = rng.next_unit() * 30;
    t.communicate = rng.next_below(3) != 0;
  }
  ClusterConfig cluster = workers_only(3);
  cluster.skew_ms = {0.0, 7.0, 2.0};
  const auto timeline = simulate_iteration(4.0, work, cluster);
  for (std::uint32_t w = 0; w < 3; ++w) {
    std::vector<std::pair<double, double>> intervals;
    double open = -1.0;
    for (const auto& e : timeline.events) {
      if (e.worker != w) continue;
      if (e.kind == EventKind::kCommStart) open = e.time_ms;
      if (e.kind == EventKind::kCommEnd) intervals.emplace_back(open, e.time_ms);
    }
    std::sort(intervals.begin(), intervals.end());
    for (std::size_t i = 1; i < intervals.size(); ++i)
      CHECK(intervals[i].first >= intervals[i - 1].second);
  }
}

TEST_CASE("identical configs produce identical event lists") {
  auto work = uniform_work(10, 50.0, 120.0);
  select_covap(work, 2, 1);
  ClusterConfig cluster = workers_only(4);
  cluster.skew_ms = {0.0, 1.5, 0.25, 3.0};
  const auto a = simulate_iteration(12.0, work, cluster);
  const auto b = simulate_iteration(12.0, work, cluster);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].kind == b.events[i].kind);
    CHECK(a.events[i].tensor == b.events[i].tensor);
    CHECK(a.events[i].worker == b.events[i].worker);
    CHECK(a.events[i].time_ms == b.events[i].time_ms);
  }
}

TEST_CASE("profile equals the raw measurement without skew") {
  const auto work = uniform_work(8, 135.0, 280.0);
  const auto timeline = simulate_iteration(55.0, work, workers_only(4));
  const auto profile = profile_ccr(worker_views(timeline, 4), 4);
  CHECK(profile.comm_aligned_ms == doctest::Approx(280.0).epsilon(1e-12));
  CHECK(profile.comp_ms == doctest::Approx(135.0).epsilon(1e-12));
  CHECK(profile.ccr == doctest::Approx(280.0 / 135.0).epsilon(1e-12));
  CHECK(profile.recommended_interval == 3);
  for (double naive : profile.naive_comm_ms)
    CHECK(naive == doctest::Approx(280.0).epsilon(1e-12));
}

TEST_CASE("rendezvous waiting inflates only the naive estimate") {
  std::vector<TensorWork> work(1);
  work[0].comp_ms = 50.0;
  work[0].comm_ms = 100.0;
  ClusterConfig cluster = workers_only(3);
  cluster.skew_ms = {0.0, 40.0, 0.0};
  const auto timeline = simulate_iteration(10.0, work, cluster);
  const auto profile = profile_ccr(worker_views(timeline, 3), 3);
  CHECK(profile.comm_aligned_ms == 100.0);
  CHECK(profile.naive_comm_ms[0] == 140.0);  // 29% overstatement for worker 0
  CHECK(profile.naive_comm_ms[1] == 100.0);  // the late worker never waits
  CHECK(profile.naive_comm_ms[2] == 140.0);
  CHECK(profile.ccr == doctest::Approx(2.0));
}

TEST_CASE("aligned profile is invariant to any skew vector") {
  SplitMix64 rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t b = 1 + rng.next_below(12);
    std::vector<TensorWork> work(b);
    for (auto& t : work) {
      t.comp_ms = static_cast<double>(1 + rng.next_below(64)) * 0.25;
      t.comm_ms = static_cast<double>(1 + rng.next_below(128)) * 0.25;
    }
    const std::uint32_t workers = 2 + static_cast<std::uint32_t>(rng.next_below(4));
    const double before = static_cast<double>(rng.next_below(128)) * 0.25;

    const auto base = simulate_iteration(before, work, workers_only(workers));
    const auto base_profile = profile_ccr(worker_views(base, workers), workers);

    ClusterConfig skewed = workers_only(workers);
    for (std::uint32_t w = 0; w < workers; ++w)
      skewed.skew_ms.push_back(static_cast<double>(rng.next_below(256)) * 0.25);
    const auto shifted = simulate_iteration(before, work, skewed);
    const auto shifted_profile = profile_ccr(worker_views(shifted, workers), workers);

    CHECK(shifted_profile.comm_aligned_ms == base_profile.comm_aligned_ms);
    CHECK(shifted_profile.ccr == base_profile.ccr);
  }
}

TEST_CASE("a communication-free iteration profiles as ratio zero") {
  std::vector<TensorWork> work(4);
  for (auto& t : work) {
    t.comp_ms = 10.0;
    t.communicate = false;
  }
  const auto timeline = simulate_iteration(5.0, work, workers_only(2));
  const auto profile = profile_ccr(worker_views(timeline, 2), 2);
  CHECK(profile.ccr == 0.0);
  CHECK(profile.recommended_interval == 1);
}

TEST_CASE("missing worker traces are rejected") {
  const auto work = uniform_work(4, 20.0, 40.0);
  const auto timeline = simulate_iteration(5.0, work, workers_only(3));
  auto views = worker_views(timeline, 3);
  CHECK_THROWS_AS(profile_ccr({views.data(), 2}, 3), IncompleteProfile);
  views.pop_back();
  CHECK_THROWS_AS(profile_ccr(views, 3), IncompleteProfile);
}

TEST_CASE("iteration inputs honor the compressor choice") {
  ExperimentConfig config = uniform_experiment(8, 55, 135, 280);
  const auto plan = allocate_buckets(config.model);

  CompressorSpec covap_spec;
  covap_spec.scheme = Scheme::kCovap;
  covap_spec.covap.interval = 4;
  const auto covap_inputs = build_iteration_inputs(config.model, plan, config.cluster,
                                                   config.phases, covap_spec, 1);
  std::size_t communicated = 0;
  for (const auto& t : covap_inputs.work) {
    if (t.communicate) ++communicated;
    CHECK(t.compress_ms == 0.0);
  }
  CHECK(communicated == 2);  // tensors 1 and 5

  CompressorSpec half;
  half.scheme = Scheme::kFp16;
  const auto half_inputs =
      build_iteration_inputs(config.model, plan, config.cluster, config.phases, half, 0);
  for (std::size_t i = 0; i < half_inputs.work.size(); ++i) {
    CHECK(half_inputs.work[i].wire_bytes == 2000);
    CHECK(half_inputs.work[i].comm_ms == doctest::Approx(280.0 / 8.0 / 2.0));
    CHECK(half_inputs.work[i].compress_ms > 0.0);
  }

  CompressorSpec topk;
  topk.scheme = Scheme::kTopk;
  const auto topk_inputs =
      build_iteration_inputs(config.model, plan, config.cluster, config.phases, topk, 0);
  double total_comm = 0.0;
  for (const auto& t : topk_inputs.work) total_comm += t.comm_ms;
  CHECK(total_comm < 280.0);
  CHECK(topk_inputs.work[0].compress_ms > 0.0);
}

TEST_CASE("ratio sweep flattens at the recommended interval") {
  ExperimentConfig config = uniform_experiment(24, 55, 135, 280);
  config.sweep_ratios = {1, 2, 3, 4, 5, 6};
  const auto result = run_experiment(config);

  REQUIRE(result.ratio_curve.size() == 6);
  CHECK(result.report.recommended_interval == 3);

  // Interval 1 is the plain overlapped baseline.
  CHECK(result.ratio_curve[0].speedup ==
        doctest::Approx(64.0 * 190.0 / 335.0).epsilon(1e-9));

  const double gain_to_knee = result.ratio_curve[2].speedup - result.ratio_curve[0].speedup;
  const double gain_past_knee = result.ratio_curve[3].speedup - result.ratio_curve[2].speedup;
  CHECK(gain_to_knee > 0.0);
  CHECK(gain_past_knee < 0.02 * gain_to_knee);

  // Monotone non-decreasing mean speedup up to the knee.
  CHECK(result.ratio_curve[1].speedup > result.ratio_curve[0].speedup);
  CHECK(result.ratio_curve[2].speedup >= result.ratio_curve[1].speedup);
}

TEST_CASE("a ratio-four workload flattens at four") {
  ExperimentConfig config = uniform_experiment(24, 105, 216, 864);
  config.sweep_ratios = {1, 2, 3, 4, 5, 6};
  const auto result = run_experiment(config);
  CHECK(result.report.recommended_interval == 4);
  const double gain_to_knee = result.ratio_curve[3].speedup - result.ratio_curve[0].speedup;
  const double gain_past_knee = result.ratio_curve[4].speedup - result.ratio_curve[3].speedup;
  CHECK(gain_past_knee < 0.02 * gain_to_knee);
}

TEST_CASE("experiments are deterministic") {
  ExperimentConfig config = uniform_experiment(24, 55, 135, 280);
  config.sweep_ratios = {1, 2, 3, 4};
  config.sweep_workers = {8, 64};
  const auto a = run_experiment(config);
  const auto b = run_experiment(config, 2);
  REQUIRE(a.ratio_curve.size() == b.ratio_curve.size());
  for (std::size_t i = 0; i < a.ratio_curve.size(); ++i) {
    CHECK(a.ratio_curve[i].speedup == b.ratio_curve[i].speedup);
    CHECK(a.ratio_curve[i].mean_iteration_ms == b.ratio_curve[i].mean_iteration_ms);
  }
  REQUIRE(a.scaling.size() == b.scaling.size());
  for (std::size_t i = 0; i < a.scaling.size(); ++i) {
    CHECK(a.scaling[i].speedup == b.scaling[i].speedup);
    CHECK(a.scaling[i].scheme == b.scaling[i].scheme);
  }
}

TEST_CASE("worker sweep scales the declared communication volume") {
  ExperimentConfig config = uniform_experiment(24, 55, 135, 280);
  config.sweep_workers = {8, 16, 32, 64};
  const auto result = run_experiment(config);
  REQUIRE(result.scaling.size() == 4 * 5);
  // Every scheme appears once per cluster size, and the compressed rows beat
  // the dense row at every size.
  for (std::size_t row = 0; row < result.scaling.size(); row += 5) {
    CHECK(result.scaling[row].scheme == "none");
    CHECK(result.scaling[row + 1].scheme == "covap");
    CHECK(result.scaling[row + 1].speedup > result.scaling[row].speedup);
  }
}

}  // TEST_SUITE
