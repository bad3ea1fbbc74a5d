#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "covap/compress.hpp"
#include "covap/model.hpp"
#include "covap/perf.hpp"

namespace covap {

struct ClusterConfig {
  std::uint32_t workers = 1;
  double bandwidth_bps = 30e9;        // bits per second
  double latency_ms = 0.0;            // fixed cost per collective
  double allreduce_efficiency = 1.0;  // effective fraction of the nominal bandwidth
  std::vector<double> skew_ms;        // per-worker start offsets; empty = all zero

  void validate() const;
  double skew(std::uint32_t worker) const {
    return worker < skew_ms.size() ? skew_ms[worker] : 0.0;
  }
  double max_skew() const;
};

// Ring-allreduce cost: latency + (2(P-1)/P) * bytes over the effective bandwidth.
double comm_time_ms(std::uint64_t bytes, const ClusterConfig& cluster);

enum class EventKind {
  kComputeStart,
  kComputeEnd,
  kCompressStart,
  kCompressEnd,
  kCommStart,
  kCommEnd,
};

const char* event_kind_name(EventKind kind);

struct Event {
  EventKind kind;
  std::int64_t tensor;
  std::uint32_t worker;
  double time_ms;
};

struct IterationTimeline {
  std::vector<Event> events;  // sorted by (time, worker, tensor, kind)
  double t_total_ms = 0.0;
  std::vector<ScheduleBubble> bubbles;
  double unoverlapped_comm_ms = 0.0;
  std::uint64_t transmitted_bytes = 0;
};

// Everything the event loop needs to know about one effective tensor.
struct TensorWork {
  double comp_ms = 0.0;
  double compress_ms = 0.0;
  double comm_ms = 0.0;      // transfer duration if communicated this iteration
  bool communicate = true;
  std::uint64_t wire_bytes = 0;
};

// One synchronous data-parallel iteration over P workers. Each worker runs
// the same compute stream (shifted by its skew); collectives rendezvous, so a
// transfer starts when the last worker arrives and ends for all workers at
// once. Per worker the collectives serialize in tensor order.
//
// With compress_on_stream (the default) compression blocks run on the compute
// stream and delay later tensors; otherwise they run on a side lane and only
// delay their own tensor's transfer.
IterationTimeline simulate_iteration(double before_ms, std::span<const TensorWork> work,
                                     const ClusterConfig& cluster,
                                     bool compress_on_stream = true);

// The events one worker observes (its own compute stream, its own arrival at
// each collective, the shared completion).
IterationTimeline worker_view(const IterationTimeline& timeline, std::uint32_t worker);
std::vector<IterationTimeline> worker_views(const IterationTimeline& timeline,
                                            std::uint32_t workers);

struct ProfileResult {
  double ccr = 0.0;
  double comp_ms = 0.0;
  double comm_aligned_ms = 0.0;          // rendezvous-aligned communication time
  std::vector<double> naive_comm_ms;     // per worker, includes rendezvous waits
  std::uint32_t recommended_interval = 1;
};

// Distributed one-iteration profile: for each collective, the true duration is
// measured from the last arrival to the shared end; per-worker waiting is
// excluded, making the result invariant to worker skew.
ProfileResult profile_ccr(std::span<const IterationTimeline> per_worker,
                          std::uint32_t expected_workers);

// ---------------------------------------------------------------------------
// Building TensorWork from a model plan and a compressor choice.

enum class Scheme { kNone, kCovap, kTopk, kRandomk, kFp16 };

Scheme scheme_from_name(const std::string& name);
const char* scheme_name(Scheme scheme);

struct CompressorSpec {
  Scheme scheme = Scheme::kNone;
  double k_fraction = 0.01;
  CovapConfig covap;
  bool compress_on_stream = true;
};

struct IterationInputs {
  double before_ms = 0.0;
  std::vector<TensorWork> work;
};

// Per-tensor costs for one iteration at the given step. Dense communication
// comes from explicit totals (split proportionally to bytes) when
// phases.comm_ms > 0, otherwise from the analytic collective cost. Baseline
// schemes price their overhead and volume reduction from the reference cost
// table scaled by parameter count; the half-precision scheme halves wire
// bytes directly.
IterationInputs build_iteration_inputs(const ModelSpec& model, const BucketPlan& plan,
                                       const ClusterConfig& cluster, const PhaseTimes& phases,
                                       const CompressorSpec& compressor, std::uint64_t step);

}  // namespace covap
