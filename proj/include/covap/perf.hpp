#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace covap {

// Iteration phase durations. Totals are always meaningful; the per-tensor
// lists are optional (empty means absent) and enable the exact overlap
// schedule instead of the totals approximation.
struct PhaseTimes {
  double before_ms = 0.0;  // data loading + forward pass
  double comp_ms = 0.0;    // total backward pass
  double comm_ms = 0.0;    // total dense communication
  std::vector<double> comp_per_tensor;
  std::vector<double> comm_per_tensor;
  std::vector<double> compress_per_tensor;

  void validate() const;  // throws InvalidInput on negatives or sum mismatch
};

// comm / comp; throws UndefinedRatio when comp is zero with nonzero comm.
double ccr(double comm_ms, double comp_ms);

// Transmission interval for a measured ratio: max(1, ceil(ccr)).
std::uint32_t choose_interval(double ccr_value);

// Serial iteration: before + comp + comm.
double t_dp(const PhaseTimes& phases);

// Linear-scaling iteration: communication fully hidden or absent.
double t_dp_ls(const PhaseTimes& phases);

// Overlapped iteration from totals: before + comp + max(0, comm - comp).
double t_ovlp_totals(double before_ms, double comp_ms, double comm_ms);

struct ScheduleBubble {
  std::int64_t after_tensor = 0;
  double duration_ms = 0.0;
};

// Exact overlapped schedule over per-tensor times. Tensor i's transfer may
// begin once the channel is free and the compute stream has produced it; the
// compute stream runs before, then comp/compress blocks back to back, and
// tensor i leaves the stream at the start of block i. Total is the later of
// the stream end and the last transfer end.
struct OverlapSchedule {
  double total_ms = 0.0;
  double stream_end_ms = 0.0;          // before + sum(comp) + sum(compress)
  double unoverlapped_comm_ms = 0.0;   // max(0, total - stream_end)
  std::vector<double> comm_start_ms;   // entries only for communicated tensors
  std::vector<double> comm_end_ms;
  std::vector<std::int64_t> comm_tensor;
  std::vector<ScheduleBubble> bubbles;
};

OverlapSchedule overlap_schedule(double before_ms, std::span<const double> comp_ms,
                                 std::span<const double> compress_ms,
                                 std::span<const double> comm_ms,
                                 const std::vector<bool>& communicated = {});

// Dispatches to the exact schedule when per-tensor lists are present.
double t_ovlp(const PhaseTimes& phases);

// Compressed, not overlapped: before + comp + compress + comm_gc.
double t_gc(double before_ms, double comp_ms, double compress_ms, double comm_gc_ms);

// Compressed and overlapped, totals form:
// before + (comp + compress) + max(0, comm_gc - (comp + compress)).
double t_gc_ovlp(double before_ms, double comp_ms, double compress_ms, double comm_gc_ms);

// P * k / (k + ccr) with k = before/comp + 1.
double speedup_fraction(double before_ms, double comp_ms, double ccr_value, double workers);

struct ExpectedCheck {
  std::string metric;
  double expected = 0.0;
  double computed = 0.0;
  bool consistent = false;
};

struct SpeedupReport {
  double ccr = 0.0;
  double t_dp_ms = 0.0;
  double t_dp_ls_ms = 0.0;
  double t_ovlp_ms = 0.0;
  double s_ovlp = 0.0;
  double s_ls = 0.0;
  std::uint32_t recommended_interval = 1;
  double workers = 1.0;
  double predicted_speedup_frac = 0.0;  // Eq-style upper band, P * k / (k + ccr)
  std::vector<ExpectedCheck> expected_checks;
};

SpeedupReport make_speedup_report(const PhaseTimes& phases, double workers);

// Tolerance for comparing a recomputed speedup against a published one.
inline constexpr double kExpectedCheckTolerance = 0.03;

void add_expected_check(SpeedupReport& report, const std::string& metric, double expected,
                        double computed);

}  // namespace covap
