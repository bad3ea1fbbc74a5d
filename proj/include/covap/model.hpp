#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace covap {

// One gradient-producing parameter group, in backward completion order.
struct LayerSpec {
  std::string name;
  std::uint64_t param_count = 0;
  std::uint32_t bytes_per_param = 4;  // 4 (fp32) or 2 (fp16)
  double backward_ms = 0.0;           // optional per-layer backward time

  std::uint64_t bytes() const { return param_count * bytes_per_param; }
};

struct ModelSpec {
  std::vector<LayerSpec> layers;  // backward completion order
  std::uint64_t bucket_cap_bytes = kDefaultBucketCapBytes;

  static constexpr std::uint64_t kDefaultBucketCapBytes = 25ULL * 1024 * 1024;

  std::uint64_t total_params() const;
  double total_backward_ms() const;
  void validate() const;  // throws InvalidInput
};

// A communication tensor: consecutive layers merged up to the capacity.
struct Bucket {
  std::size_t index = 0;                 // ordinal in backward completion order
  std::vector<std::size_t> layer_refs;   // indices into ModelSpec::layers
  std::uint64_t numel = 0;
  std::uint64_t bytes = 0;
};

// A contiguous element slice of one bucket, produced by shard_plan.
struct Shard {
  std::size_t parent_bucket = 0;
  std::uint64_t begin_elem = 0;  // [begin_elem, end_elem) within the parent
  std::uint64_t end_elem = 0;

  std::uint64_t numel() const { return end_elem - begin_elem; }
};

// Median bucket size kept exact: twice the median is always an integer, so
// floor(numel / median) can be evaluated without floating point.
struct MedianNumel {
  std::uint64_t twice = 0;

  double value() const { return static_cast<double>(twice) / 2.0; }
  std::uint64_t floor_ratio(std::uint64_t numel) const { return (2 * numel) / twice; }
};

struct BucketPlan {
  std::vector<Bucket> buckets;
  std::uint64_t cap_bytes = ModelSpec::kDefaultBucketCapBytes;
  std::vector<Shard> shards;  // empty until shard_plan runs; ordered by parent

  bool bucket_is_sharded(std::size_t bucket_index) const;
  std::uint64_t total_numel() const;
};

// The unit the filter, the simulator and the trainer all operate on: an
// unsharded bucket, or one shard of a sharded bucket. Offsets are into the
// flat gradient vector laid out bucket by bucket in backward order.
struct EffectiveTensor {
  std::size_t bucket = 0;
  std::uint64_t begin = 0;  // global flat element offset
  std::uint64_t end = 0;

  std::uint64_t numel() const { return end - begin; }
};

// Greedy accumulation in backward order: a layer joins the current bucket
// unless that would exceed cap_bytes and the bucket is non-empty. A single
// layer larger than the capacity gets a bucket of its own, never split here.
BucketPlan allocate_buckets(const ModelSpec& model, std::uint64_t cap_bytes);
BucketPlan allocate_buckets(const ModelSpec& model);

MedianNumel median_numel(const BucketPlan& plan);

// Slices every bucket holding at least twice the median element count into
// min(floor(numel/median), interval) even parts (sizes differ by at most one
// element; the first numel mod parts shards take the extra element).
BucketPlan shard_plan(const BucketPlan& plan, std::uint32_t interval);

std::vector<EffectiveTensor> effective_tensors(const BucketPlan& plan);
std::vector<std::uint64_t> effective_numels(const BucketPlan& plan);

// Per-tensor backward times. Uses declared layer times when every layer in
// the plan carries one, otherwise splits total_comp_ms proportionally to
// element counts. Shards split their bucket's time the same way.
std::vector<double> split_compute_times(const ModelSpec& model, const BucketPlan& plan,
                                        double total_comp_ms);

ModelSpec model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const ModelSpec& model);
nlohmann::json plan_to_json(const BucketPlan& plan);

}  // namespace covap
