#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace covap {

// Measured per-iteration compression overheads and communication-time
// reductions for the reference 143.7M-parameter CNN on a 30 Gbps cluster.
// These are data inputs for comparison charts, not quantities this library
// models; other model sizes scale both columns linearly in parameter count.
struct BaselineCost {
  const char* scheme;
  double compress_ms;
  double comm_reduction_ms;
};

inline constexpr std::uint64_t kCostReferenceParams = 143652544ULL;

std::span<const BaselineCost> baseline_cost_table();

std::optional<BaselineCost> baseline_cost(const std::string& scheme);

// Cost row scaled to a model of the given parameter count.
std::optional<BaselineCost> scaled_baseline_cost(const std::string& scheme, std::uint64_t params);

}  // namespace covap
