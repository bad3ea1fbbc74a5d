#include "covap/costs.hpp"

#include <array>

namespace covap {

namespace {

constexpr std::array<BaselineCost, 7> kTable = {{
    {"topk", 1560.0, 603.0},
    {"dgc", 25.0, 747.0},
    {"randomk", 200.0, 653.0},
    {"fp16", 5.0, 423.0},
    {"efsignsgd", 20.0, -210.0},
    {"powersgd", 20.0, 753.0},
    {"oktopk", 500.0, 674.0},
}};

}  // namespace

std::span<const BaselineCost> baseline_cost_table() { return kTable; }

std::optional<BaselineCost> baseline_cost(const std::string& scheme) {
  for (const auto& row : kTable)
    if (scheme == row.scheme) return row;
  return std::nullopt;
}

std::optional<BaselineCost> scaled_baseline_cost(const std::string& scheme, std::uint64_t params) {
  auto row = baseline_cost(scheme);
  if (!row) return std::nullopt;
  const double scale = static_cast<double>(params) / static_cast<double>(kCostReferenceParams);
  row->compress_ms *= scale;
  row->comm_reduction_ms *= scale;
  return row;
}

}  // namespace covap
