#include "covap/sim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "covap/costs.hpp"
#include "covap/errors.hpp"

namespace covap {

void ClusterConfig::validate() const {
  if (workers < 1) throw InvalidInput("cluster needs at least one worker");
  if (!(bandwidth_bps > 0.0)) throw InvalidInput("bandwidth must be positive");
  if (latency_ms < 0.0) throw InvalidInput("latency must be non-negative");
  if (!(allreduce_efficiency > 0.0) || allreduce_efficiency > 1.0)
    throw InvalidInput("allreduce_efficiency must be in (0, 1]");
  if (!skew_ms.empty() && skew_ms.size() != workers)
    throw InvalidInput("skew vector length must equal the worker count");
}

double ClusterConfig::max_skew() const {
  double m = 0.0;
  for (double s : skew_ms) m = std::max(m, s);
  return m;
}

double comm_time_ms(std::uint64_t bytes, const ClusterConfig& cluster) {
  cluster.validate();
  const double p = static_cast<double>(cluster.workers);
  const double ring_factor = cluster.workers > 1 ? 2.0 * (p - 1.0) / p : 0.0;
  const double bits = static_cast<double>(bytes) * 8.0;
  const double seconds = ring_factor * bits / (cluster.bandwidth_bps * cluster.allreduce_efficiency);
  return cluster.latency_ms + seconds * 1000.0;
}

const char* event_kind_name(EventKind kind) {
  switch (kind) {
    case EventKind::kComputeStart: return "compute_start";
    case EventKind::kComputeEnd: return "compute_end";
    case EventKind::kCompressStart: return "compress_start";
    case EventKind::kCompressEnd: return "compress_end";
    case EventKind::kCommStart: return "comm_start";
    case EventKind::kCommEnd: return "comm_end";
  }
  return "unknown";
}

namespace {

bool event_order(const Event& a, const Event& b) {
  if (a.time_ms != b.time_ms) return a.time_ms < b.time_ms;
  if (a.worker != b.worker) return a.worker < b.worker;
  if (a.tensor != b.tensor) return a.tensor < b.tensor;
  return static_cast<int>(a.kind) < static_cast<int>(b.kind);
}

}  // namespace

IterationTimeline simulate_iteration(double before_ms, std::span<const TensorWork> work,
                                     const ClusterConfig& cluster,
                                     bool compress_on_stream) {
  cluster.validate();
  if (before_ms < 0.0) throw InvalidInput("before_ms must be non-negative");
  for (const auto& t : work)
    if (t.comp_ms < 0.0 || t.compress_ms < 0.0 || t.comm_ms < 0.0)
      throw InvalidInput("tensor costs must be non-negative");

  const std::uint32_t workers = cluster.workers;
  IterationTimeline timeline;

  // Per-worker compute-stream clocks. A tensor leaves the stream at the start
  // of its block, i.e. once everything queued before it has run.
  std::vector<double> stream(workers);
  std::vector<double> busy_end(workers);
  for (std::uint32_t w = 0; w < workers; ++w) {
    stream[w] = cluster.skew(w) + before_ms;
    busy_end[w] = stream[w];
  }

  double channel = 0.0;  // shared collective channel: end of previous transfer
  bool channel_used = false;
  std::int64_t prev_comm_tensor = -1;

  for (std::size_t i = 0; i < work.size(); ++i) {
    const auto& t = work[i];
    const std::int64_t tensor = static_cast<std::int64_t>(i);

    std::vector<double> available(workers);
    for (std::uint32_t w = 0; w < workers; ++w) {
      const double block_start = stream[w];
      available[w] = block_start;
      timeline.events.push_back({EventKind::kComputeStart, tensor, w, stream[w]});
      stream[w] += t.comp_ms;
      timeline.events.push_back({EventKind::kComputeEnd, tensor, w, stream[w]});
      if (t.compress_ms > 0.0) {
        if (compress_on_stream) {
          timeline.events.push_back({EventKind::kCompressStart, tensor, w, stream[w]});
          stream[w] += t.compress_ms;
          timeline.events.push_back({EventKind::kCompressEnd, tensor, w, stream[w]});
        } else {
          const double lane_end = block_start + t.compress_ms;
          timeline.events.push_back({EventKind::kCompressStart, tensor, w, block_start});
          timeline.events.push_back({EventKind::kCompressEnd, tensor, w, lane_end});
          available[w] = lane_end;
          busy_end[w] = std::max(busy_end[w], lane_end);
        }
      }
      busy_end[w] = std::max(busy_end[w], stream[w]);
    }

    if (!t.communicate) continue;

    // Each worker calls the collective once its data is ready and its previous
    // collective has finished; the transfer begins at the last arrival.
    double start = 0.0;
    std::vector<double> arrival(workers);
    for (std::uint32_t w = 0; w < workers; ++w) {
      arrival[w] = channel_used ? std::max(channel, available[w]) : available[w];
      start = w == 0 ? arrival[w] : std::max(start, arrival[w]);
    }
    if (channel_used && start > channel)
      timeline.bubbles.push_back(ScheduleBubble{prev_comm_tensor, start - channel});

    const double end = start + t.comm_ms;
    for (std::uint32_t w = 0; w < workers; ++w) {
      timeline.events.push_back({EventKind::kCommStart, tensor, w, arrival[w]});
      timeline.events.push_back({EventKind::kCommEnd, tensor, w, end});
    }
    channel = end;
    channel_used = true;
    prev_comm_tensor = tensor;
    timeline.transmitted_bytes += t.wire_bytes;
  }

  double stream_end = busy_end.empty() ? before_ms : busy_end[0];
  for (double s : busy_end) stream_end = std::max(stream_end, s);
  timeline.t_total_ms = channel_used ? std::max(stream_end, channel) : stream_end;
  timeline.unoverlapped_comm_ms = std::max(0.0, timeline.t_total_ms - stream_end);

  std::sort(timeline.events.begin(), timeline.events.end(), event_order);
  return timeline;
}

IterationTimeline worker_view(const IterationTimeline& timeline, std::uint32_t worker) {
  IterationTimeline view;
  view.t_total_ms = timeline.t_total_ms;
  view.bubbles = timeline.bubbles;
  view.unoverlapped_comm_ms = timeline.unoverlapped_comm_ms;
  view.transmitted_bytes = timeline.transmitted_bytes;
  for (const auto& e : timeline.events)
    if (e.worker == worker) view.events.push_back(e);
  return view;
}

std::vector<IterationTimeline> worker_views(const IterationTimeline& timeline,
                                            std::uint32_t workers) {
  std::vector<IterationTimeline> views;
  views.reserve(workers);
  for (std::uint32_t w = 0; w < workers; ++w) views.push_back(worker_view(timeline, w));
  return views;
}

ProfileResult profile_ccr(std::span<const IterationTimeline> per_worker,
                          std::uint32_t expected_workers) {
  if (per_worker.size() != expected_workers || expected_workers == 0)
    throw IncompleteProfile("expected " + std::to_string(expected_workers) +
                            " worker traces, got " + std::to_string(per_worker.size()));
  for (const auto& view : per_worker)
    if (view.events.empty()) throw IncompleteProfile("a worker trace is empty");

  struct Collective {
    std::vector<double> starts;
    double end = 0.0;
    std::size_t seen = 0;
  };
  std::map<std::int64_t, Collective> collectives;

  for (std::size_t w = 0; w < per_worker.size(); ++w) {
    bool saw_comm = false;
    for (const auto& e : per_worker[w].events) {
      if (e.kind == EventKind::kCommStart) {
        auto& c = collectives[e.tensor];
        c.starts.push_back(e.time_ms);
        saw_comm = true;
      } else if (e.kind == EventKind::kCommEnd) {
        auto& c = collectives[e.tensor];
        c.end = e.time_ms;
        ++c.seen;
      }
    }
    (void)saw_comm;
  }

  ProfileResult result;
  result.naive_comm_ms.assign(per_worker.size(), 0.0);

  for (const auto& [tensor, c] : collectives) {
    if (c.starts.size() != per_worker.size() || c.seen != per_worker.size())
      throw IncompleteProfile("collective for tensor " + std::to_string(tensor) +
                              " is missing worker arrivals");
    const double last_arrival = *std::max_element(c.starts.begin(), c.starts.end());
    result.comm_aligned_ms += c.end - last_arrival;
    for (std::size_t w = 0; w < c.starts.size(); ++w)
      result.naive_comm_ms[w] += c.end - c.starts[w];
  }

  for (const auto& e : per_worker[0].events) {
    if (e.kind == EventKind::kComputeStart) result.comp_ms -= e.time_ms;
    if (e.kind == EventKind::kComputeEnd) result.comp_ms += e.time_ms;
  }

  result.ccr = ccr(result.comm_aligned_ms, result.comp_ms);
  result.recommended_interval = choose_interval(result.ccr);
  return result;
}

// ---------------------------------------------------------------------------

Scheme scheme_from_name(const std::string& name) {
  if (name == "none") return Scheme::kNone;
  if (name == "covap") return Scheme::kCovap;
  if (name == "topk") return Scheme::kTopk;
  if (name == "randomk") return Scheme::kRandomk;
  if (name == "fp16") return Scheme::kFp16;
  throw InvalidInput("unknown compressor scheme '" + name + "'");
}

const char* scheme_name(Scheme scheme) {
  switch (scheme) {
    case Scheme::kNone: return "none";
    case Scheme::kCovap: return "covap";
    case Scheme::kTopk: return "topk";
    case Scheme::kRandomk: return "randomk";
    case Scheme::kFp16: return "fp16";
  }
  return "unknown";
}

IterationInputs build_iteration_inputs(const ModelSpec& model, const BucketPlan& plan,
                                       const ClusterConfig& cluster, const PhaseTimes& phases,
                                       const CompressorSpec& compressor, std::uint64_t step) {
  cluster.validate();
  const auto tensors = effective_tensors(plan);
  if (tensors.empty()) throw InvalidInput("plan has no tensors");

  IterationInputs inputs;
  inputs.before_ms = phases.before_ms;
  inputs.work.resize(tensors.size());

  const double total_comp =
      phases.comp_ms > 0.0 ? phases.comp_ms : model.total_backward_ms();
  const auto comp_split = split_compute_times(model, plan, total_comp);

  std::vector<std::uint64_t> dense_bytes(tensors.size());
  std::uint64_t total_bytes = 0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::uint32_t width = model.layers.empty() ? 4u : model.layers[0].bytes_per_param;
    dense_bytes[i] = tensors[i].numel() * width;
    total_bytes += dense_bytes[i];
  }

  // Dense per-tensor transfer times.
  std::vector<double> dense_comm(tensors.size());
  double dense_total_ms = 0.0;
  if (phases.comm_ms > 0.0) {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      dense_comm[i] = phases.comm_ms * static_cast<double>(dense_bytes[i]) /
                      static_cast<double>(total_bytes);
    dense_total_ms = phases.comm_ms;
  } else {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      dense_comm[i] = comm_time_ms(dense_bytes[i], cluster);
      dense_total_ms += dense_comm[i];
    }
  }

  for (std::size_t i = 0; i < tensors.size(); ++i) {
    inputs.work[i].comp_ms = comp_split[i];
    inputs.work[i].comm_ms = dense_comm[i];
    inputs.work[i].wire_bytes = dense_bytes[i];
  }

  const std::uint64_t params = model.total_params();
  switch (compressor.scheme) {
    case Scheme::kNone:
      break;
    case Scheme::kCovap: {
      const auto selected = select_tensors(step, compressor.covap.interval, tensors.size(),
                                           compressor.covap.rule);
      std::vector<bool> keep(tensors.size(), false);
      for (std::size_t t : selected) keep[t] = true;
      for (std::size_t i = 0; i < tensors.size(); ++i) inputs.work[i].communicate = keep[i];
      break;
    }
    case Scheme::kFp16: {
      const auto cost = scaled_baseline_cost("fp16", params);
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        inputs.work[i].comm_ms *= 0.5;
        inputs.work[i].wire_bytes = dense_bytes[i] / 2;
        inputs.work[i].compress_ms = cost->compress_ms * static_cast<double>(tensors[i].numel()) /
                                     static_cast<double>(plan.total_numel());
      }
      break;
    }
    case Scheme::kTopk:
    case Scheme::kRandomk: {
      const auto cost =
          scaled_baseline_cost(compressor.scheme == Scheme::kTopk ? "topk" : "randomk", params);
      const double comm_gc = std::max(0.0, dense_total_ms - cost->comm_reduction_ms);
      const double factor = dense_total_ms > 0.0 ? comm_gc / dense_total_ms : 0.0;
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        inputs.work[i].comm_ms *= factor;
        inputs.work[i].wire_bytes =
            static_cast<std::uint64_t>(static_cast<double>(dense_bytes[i]) * factor);
        inputs.work[i].compress_ms = cost->compress_ms * static_cast<double>(tensors[i].numel()) /
                                     static_cast<double>(plan.total_numel());
      }
      break;
    }
  }

  return inputs;
}

}  // namespace covap
