#include "covap/report.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "covap/errors.hpp"

namespace covap {

namespace {

using nlohmann::json;

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  return out;
}

// Fixed decimal formatting keeps CSV output byte-stable.
std::string fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", value);
  return buf;
}

const char* interval_kind_name(EventKind start_kind) {
  switch (start_kind) {
    case EventKind::kComputeStart: return "compute";
    case EventKind::kCompressStart: return "compress";
    case EventKind::kCommStart: return "comm";
    default: return "unknown";
  }
}

struct IntervalRow {
  std::uint64_t iter;
  std::uint32_t worker;
  std::int64_t tensor;
  const char* kind;
  double start_ms;
  double end_ms;
};

std::vector<IntervalRow> pair_events(const std::vector<IterationRecord>& iterations) {
  std::vector<IntervalRow> rows;
  for (const auto& record : iterations) {
    std::map<std::tuple<int, std::uint32_t, std::int64_t>, double> ends;
    for (const auto& e : record.timeline.events) {
      if (e.kind == EventKind::kComputeEnd || e.kind == EventKind::kCompressEnd ||
          e.kind == EventKind::kCommEnd)
        ends[{static_cast<int>(e.kind), e.worker, e.tensor}] = e.time_ms;
    }
    for (const auto& e : record.timeline.events) {
      EventKind end_kind;
      switch (e.kind) {
        case EventKind::kComputeStart: end_kind = EventKind::kComputeEnd; break;
        case EventKind::kCompressStart: end_kind = EventKind::kCompressEnd; break;
        case EventKind::kCommStart: end_kind = EventKind::kCommEnd; break;
        default: continue;
      }
      const auto it = ends.find({static_cast<int>(end_kind), e.worker, e.tensor});
      if (it == ends.end()) continue;
      rows.push_back(IntervalRow{record.iter, e.worker, e.tensor, interval_kind_name(e.kind),
                                 e.time_ms, it->second});
    }
  }
  return rows;
}

}  // namespace

json provenance_to_json(const Provenance& p) {
  return {{"config_hash", p.config_hash},
          {"seed", p.seed},
          {"version", p.version},
          {"command", p.command}};
}

json speedup_report_to_json(const SpeedupReport& r) {
  json checks = json::array();
  for (const auto& c : r.expected_checks)
    checks.push_back({{"metric", c.metric},
                      {"expected", c.expected},
                      {"computed", c.computed},
                      {"consistent", c.consistent}});
  return {{"ccr", r.ccr},
          {"t_dp_ms", r.t_dp_ms},
          {"t_dp_ls_ms", r.t_dp_ls_ms},
          {"t_ovlp_ms", r.t_ovlp_ms},
          {"s_ovlp", r.s_ovlp},
          {"s_ls", r.s_ls},
          {"recommended_interval", r.recommended_interval},
          {"workers", r.workers},
          {"predicted_speedup_frac", r.predicted_speedup_frac},
          {"expected_checks", checks}};
}

json profile_to_json(const ProfileResult& p) {
  return {{"ccr", p.ccr},
          {"comp_ms", p.comp_ms},
          {"comm_aligned_ms", p.comm_aligned_ms},
          {"naive_comm_ms", p.naive_comm_ms},
          {"recommended_interval", p.recommended_interval}};
}

json experiment_to_json(const ExperimentResult& result, const Provenance& p) {
  json ratio_curve = json::array();
  for (const auto& point : result.ratio_curve)
    ratio_curve.push_back({{"ratio", point.ratio},
                           {"mean_iteration_ms", point.mean_iteration_ms},
                           {"mean_unoverlapped_ms", point.mean_unoverlapped_ms},
                           {"speedup", point.speedup}});
  json scaling = json::array();
  for (const auto& row : result.scaling)
    scaling.push_back({{"workers", row.workers},
                       {"scheme", row.scheme},
                       {"iteration_ms", row.iteration_ms},
                       {"speedup", row.speedup}});
  json gc_rows = json::array();
  for (const auto& row : result.gc_rows)
    gc_rows.push_back({{"scheme", row.scheme},
                       {"compress_ms", row.compress_ms},
                       {"comm_gc_ms", row.comm_gc_ms},
                       {"t_gc_ms", row.t_gc_ms},
                       {"t_gc_ovlp_ms", row.t_gc_ovlp_ms},
                       {"s_gc", row.s_gc},
                       {"s_gc_ovlp", row.s_gc_ovlp}});
  return {{"phases",
           {{"before_ms", result.phases.before_ms},
            {"comp_ms", result.phases.comp_ms},
            {"comm_ms", result.phases.comm_ms}}},
          {"report", speedup_report_to_json(result.report)},
          {"interval", result.interval},
          {"plan", plan_to_json(result.plan)},
          {"ratio_curve", ratio_curve},
          {"scaling", scaling},
          {"gc_reference", gc_rows},
          {"provenance", provenance_to_json(p)}};
}

json train_summary_to_json(const TrainRun& run, const Provenance& p) {
  return {{"steps_completed", run.steps_completed},
          {"final_loss", run.final_loss},
          {"diverged", run.diverged},
          {"total_bytes",
           [&] {
             std::uint64_t total = 0;
             for (auto b : run.bytes_per_step) total += b;
             return total;
           }()},
          {"provenance", provenance_to_json(p)}};
}

void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& iterations) {
  auto out = open_out(path);
  out << "iter,worker,tensor,kind,start_ms,end_ms\n";
  for (const auto& row : pair_events(iterations)) {
    out << row.iter << ',' << row.worker << ',' << row.tensor << ',' << row.kind << ','
        << fixed6(row.start_ms) << ',' << fixed6(row.end_ms) << '\n';
  }
}

void write_iterations_csv(const std::string& path,
                          const std::vector<IterationRecord>& iterations) {
  auto out = open_out(path);
  out << "ratio,iter,t_total_ms,unoverlapped_ms,transmitted_bytes\n";
  for (const auto& record : iterations) {
    out << record.ratio << ',' << record.iter << ',' << fixed6(record.timeline.t_total_ms) << ','
        << fixed6(record.timeline.unoverlapped_comm_ms) << ','
        << record.timeline.transmitted_bytes << '\n';
  }
}

void write_ratio_csv(const std::string& path, const std::vector<RatioPoint>& curve) {
  auto out = open_out(path);
  out << "ratio,mean_iteration_ms,mean_unoverlapped_ms,speedup\n";
  for (const auto& point : curve) {
    out << point.ratio << ',' << fixed6(point.mean_iteration_ms) << ','
        << fixed6(point.mean_unoverlapped_ms) << ',' << fixed6(point.speedup) << '\n';
  }
}

void write_scaling_csv(const std::string& path, const std::vector<ScalingRow>& rows) {
  auto out = open_out(path);
  out << "workers,scheme,iteration_ms,speedup\n";
  for (const auto& row : rows) {
    out << row.workers << ',' << row.scheme << ',' << fixed6(row.iteration_ms) << ','
        << fixed6(row.speedup) << '\n';
  }
}

void write_train_csv(const std::string& path, const TrainRun& run) {
  auto out = open_out(path);
  out << "step,loss,bytes\n";
  for (std::size_t i = 0; i < run.losses.size(); ++i) {
    const std::uint64_t bytes = i < run.bytes_per_step.size() ? run.bytes_per_step[i] : 0;
    out << i << ',' << fixed6(run.losses[i]) << ',' << bytes << '\n';
  }
}

void write_chrome_trace(const std::string& path, const std::vector<IterationRecord>& iterations) {
  json events = json::array();
  double iter_offset = 0.0;
  for (const auto& record : iterations) {
    for (const auto& row : pair_events({record})) {
      std::ostringstream name;
      name << row.kind << " t" << row.tensor;
      events.push_back({{"name", name.str()},
                        {"ph", "X"},
                        {"ts", (iter_offset + row.start_ms) * 1000.0},
                        {"dur", (row.end_ms - row.start_ms) * 1000.0},
                        {"pid", row.worker},
                        {"tid", std::string(row.kind) == "comm" ? 1 : 0},
                        {"args", {{"iter", row.iter}}}});
    }
    iter_offset += record.timeline.t_total_ms;
  }
  json doc = {{"traceEvents", events}, {"displayTimeUnit", "ms"}};
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
}

std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) widths[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size() && c < widths.size(); ++c)
      widths[c] = std::max(widths[c], row[c].size());

  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < widths.size(); ++c) {
      const std::string& cell = c < row.size() ? row[c] : "";
      out << cell << std::string(widths[c] - cell.size() + 2, ' ');
    }
    out << '\n';
  };
  emit(header);
  for (std::size_t c = 0; c < widths.size(); ++c) out << std::string(widths[c], '-') << "  ";
  out << '\n';
  for (const auto& row : rows) emit(row);
  return out.str();
}

std::string format_ms(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

}  // namespace covap
