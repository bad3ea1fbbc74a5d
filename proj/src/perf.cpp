#include "covap/perf.hpp"

#include <algorithm>
#include <cmath>

#include "covap/errors.hpp"

namespace covap {

namespace {

double checked_sum(std::span<const double> values, const char* what) {
  double total = 0.0;
  for (double v : values) {
    if (v < 0.0) throw InvalidInput(std::string(what) + " contains a negative duration");
    total += v;
  }
  return total;
}

}  // namespace

void PhaseTimes::validate() const {
  if (before_ms < 0.0 || comp_ms < 0.0 || comm_ms < 0.0)
    throw InvalidInput("phase totals must be non-negative");
  constexpr double kRelTol = 1e-6;
  if (!comp_per_tensor.empty()) {
    const double sum = checked_sum(comp_per_tensor, "comp_per_tensor");
    if (std::abs(sum - comp_ms) > kRelTol * std::max(1.0, comp_ms))
      throw InvalidInput("comp_per_tensor does not sum to comp_ms");
  }
  if (!comm_per_tensor.empty()) {
    const double sum = checked_sum(comm_per_tensor, "comm_per_tensor");
    if (std::abs(sum - comm_ms) > kRelTol * std::max(1.0, comm_ms))
      throw InvalidInput("comm_per_tensor does not sum to comm_ms");
  }
  if (!compress_per_tensor.empty()) checked_sum(compress_per_tensor, "compress_per_tensor");
}

double ccr(double comm_ms, double comp_ms) {
  if (comm_ms < 0.0 || comp_ms < 0.0) throw InvalidInput("phase times must be non-negative");
  if (comp_ms == 0.0) {
    if (comm_ms == 0.0) return 0.0;
    throw UndefinedRatio("CCR is undefined for zero computation time");
  }
  return comm_ms / comp_ms;
}

std::uint32_t choose_interval(double ccr_value) {
  if (ccr_value < 0.0) throw InvalidInput("CCR must be non-negative");
  const double up = std::ceil(ccr_value);
  return up < 1.0 ? 1u : static_cast<std::uint32_t>(up);
}

double t_dp(const PhaseTimes& p) { return p.before_ms + p.comp_ms + p.comm_ms; }

double t_dp_ls(const PhaseTimes& p) { return p.before_ms + p.comp_ms; }

double t_ovlp_totals(double before_ms, double comp_ms, double comm_ms) {
  return before_ms + comp_ms + std::max(0.0, comm_ms - comp_ms);
}

OverlapSchedule overlap_schedule(double before_ms, std::span<const double> comp_ms,
                                 std::span<const double> compress_ms,
                                 std::span<const double> comm_ms,
                                 const std::vector<bool>& communicated) {
  const std::size_t n = comp_ms.size();
  if (comm_ms.size() != n || (!compress_ms.empty() && compress_ms.size() != n) ||
      (!communicated.empty() && communicated.size() != n))
    throw InvalidInput("per-tensor lists have inconsistent lengths");

  OverlapSchedule sched;
  double stream = before_ms;   // compute-stream clock; tensor i leaves at block start
  double channel = 0.0;        // end of the previous transfer
  bool channel_used = false;
  std::int64_t prev_tensor = -1;

  for (std::size_t i = 0; i < n; ++i) {
    const double available = stream;
    stream += comp_ms[i];
    if (!compress_ms.empty()) stream += compress_ms[i];

    const bool sends = communicated.empty() || communicated[i];
    if (!sends) continue;

    const double start = channel_used ? std::max(channel, available) : available;
    if (channel_used && start > channel)
      sched.bubbles.push_back(ScheduleBubble{prev_tensor, start - channel});
    const double end = start + comm_ms[i];

    sched.comm_tensor.push_back(static_cast<std::int64_t>(i));
    sched.comm_start_ms.push_back(start);
    sched.comm_end_ms.push_back(end);
    channel = end;
    channel_used = true;
    prev_tensor = static_cast<std::int64_t>(i);
  }

  sched.stream_end_ms = stream;
  sched.total_ms = channel_used ? std::max(stream, channel) : stream;
  sched.unoverlapped_comm_ms = std::max(0.0, sched.total_ms - sched.stream_end_ms);
  return sched;
}

double t_ovlp(const PhaseTimes& p) {
  p.validate();
  if (!p.comp_per_tensor.empty() && !p.comm_per_tensor.empty()) {
    return overlap_schedule(p.before_ms, p.comp_per_tensor, p.compress_per_tensor,
                            p.comm_per_tensor)
        .total_ms;
  }
  return t_ovlp_totals(p.before_ms, p.comp_ms, p.comm_ms);
}

double t_gc(double before_ms, double comp_ms, double compress_ms, double comm_gc_ms) {
  return before_ms + comp_ms + compress_ms + comm_gc_ms;
}

double t_gc_ovlp(double before_ms, double comp_ms, double compress_ms, double comm_gc_ms) {
  const double busy = comp_ms + compress_ms;
  return before_ms + busy + std::max(0.0, comm_gc_ms - busy);
}

double speedup_fraction(double before_ms, double comp_ms, double ccr_value, double workers) {
  if (comp_ms <= 0.0) throw UndefinedRatio("speedup fraction needs positive computation time");
  const double k = before_ms / comp_ms + 1.0;
  return workers * k / (k + ccr_value);
}

SpeedupReport make_speedup_report(const PhaseTimes& phases, double workers) {
  phases.validate();
  SpeedupReport report;
  report.ccr = ccr(phases.comm_ms, phases.comp_ms);
  report.t_dp_ms = t_dp(phases);
  report.t_dp_ls_ms = t_dp_ls(phases);
  report.t_ovlp_ms = t_ovlp(phases);
  report.s_ovlp = report.t_ovlp_ms > 0.0 ? report.t_dp_ms / report.t_ovlp_ms : 1.0;
  report.s_ls = report.t_dp_ls_ms > 0.0 ? report.t_dp_ms / report.t_dp_ls_ms : 1.0;
  report.recommended_interval = choose_interval(report.ccr);
  report.workers = workers;
  report.predicted_speedup_frac =
      phases.comp_ms > 0.0 ? speedup_fraction(phases.before_ms, phases.comp_ms, report.ccr, workers)
                           : workers;
  return report;
}

void add_expected_check(SpeedupReport& report, const std::string& metric, double expected,
                        double computed) {
  ExpectedCheck check;
  check.metric = metric;
  check.expected = expected;
  check.computed = computed;
  check.consistent = std::abs(expected - computed) <= kExpectedCheckTolerance;
  report.expected_checks.push_back(std::move(check));
}

}  // namespace covap
