#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "covap/rng.hpp"

namespace covap {

using TensorVec = std::vector<double>;
using GradientSet = std::vector<TensorVec>;  // one vector per effective tensor

// The selection congruence. kMatchStep keeps tensor t in iterations where
// t == step (mod I); kPlusStep uses t + step == 0 (mod I). Both walk every
// tensor exactly once per I iterations, they just rotate in opposite
// directions. kMatchStep is the default.
enum class SelectionRule { kMatchStep, kPlusStep };

// Indices of the tensors transmitted at this iteration, ascending.
std::vector<std::size_t> select_tensors(std::uint64_t num_steps, std::uint32_t interval,
                                        std::size_t tensor_count,
                                        SelectionRule rule = SelectionRule::kMatchStep);

struct EfSchedule {
  bool enabled = true;
  double init_value = 0.3;
  std::uint64_t ascend_steps = 100;
  double ascend_range = 0.1;
};

// min(init_value + floor(num_steps / ascend_steps) * ascend_range, 1)
double ef_coefficient(std::uint64_t num_steps, const EfSchedule& schedule);

struct CovapConfig {
  std::uint32_t interval = 1;
  SelectionRule rule = SelectionRule::kMatchStep;
  EfSchedule ef;
};

struct CompressorState {
  GradientSet residuals;
  std::uint64_t num_steps = 0;

  static CompressorState zeros(const std::vector<std::uint64_t>& numels);
};

struct CompressedUpdate {
  std::vector<std::size_t> selected;  // ascending effective-tensor indices
  GradientSet payload;                // payload[i] belongs to selected[i]
  std::uint64_t step = 0;

  std::uint64_t payload_elements() const;
};

// One compression step: fold scheduled residuals into the gradients, keep the
// selected tensors as the payload, stash the rest as new residuals, advance
// the step counter. Residuals of transmitted tensors are zeroed.
CompressedUpdate covap_compress(const GradientSet& gradients, CompressorState& state,
                                const CovapConfig& config);

// Inverse embedding: payload values at their tensor slots, zeros elsewhere.
GradientSet covap_decompress(const CompressedUpdate& update,
                             const std::vector<std::uint64_t>& numels);

// ---------------------------------------------------------------------------
// Baseline compressors.

struct SparseSelection {
  std::vector<std::size_t> indices;
  std::vector<double> values;  // aligned with indices
};

// ceil(k_fraction * d) entries of largest magnitude; ties keep the lower index.
SparseSelection topk_compress(std::span<const double> x, double k_fraction);

// ceil(k_fraction * d) indices sampled uniformly without replacement. The
// same seed yields the same indices everywhere, so the result is
// allreduce-compatible across workers.
SparseSelection randomk_compress(std::span<const double> x, double k_fraction, std::uint64_t seed);

// Round every element to the nearest half-precision value and widen it back.
// Values beyond the half range clamp to +-65504 and bump *saturation_count.
TensorVec fp16_roundtrip(std::span<const double> x, std::uint64_t* saturation_count = nullptr);

std::uint16_t half_bits_from_float(float value, bool* saturated = nullptr);
float float_from_half_bits(std::uint16_t bits);

// ---------------------------------------------------------------------------
// A dense view of any compressor so all schemes share one error-feedback
// wrapper: keep() returns the transmitted gradient at full width, zeros where
// the scheme dropped data.

class GradientFilter {
 public:
  virtual ~GradientFilter() = default;
  virtual GradientSet keep(const GradientSet& gradients, std::uint64_t step) const = 0;
  // Elements actually sent over the wire for volume accounting.
  virtual std::uint64_t transmitted_elements(const GradientSet& gradients,
                                             std::uint64_t step) const = 0;
};

class IdentityFilter final : public GradientFilter {
 public:
  GradientSet keep(const GradientSet& g, std::uint64_t) const override { return g; }
  std::uint64_t transmitted_elements(const GradientSet& g, std::uint64_t) const override;
};

class CovapFilter final : public GradientFilter {
 public:
  CovapFilter(std::uint32_t interval, SelectionRule rule = SelectionRule::kMatchStep)
      : interval_(interval), rule_(rule) {}
  GradientSet keep(const GradientSet& g, std::uint64_t step) const override;
  std::uint64_t transmitted_elements(const GradientSet& g, std::uint64_t step) const override;

 private:
  std::uint32_t interval_;
  SelectionRule rule_;
};

class TopkFilter final : public GradientFilter {
 public:
  explicit TopkFilter(double k_fraction) : k_fraction_(k_fraction) {}
  GradientSet keep(const GradientSet& g, std::uint64_t step) const override;
  std::uint64_t transmitted_elements(const GradientSet& g, std::uint64_t step) const override;

 private:
  double k_fraction_;
};

class RandomkFilter final : public GradientFilter {
 public:
  RandomkFilter(double k_fraction, std::uint64_t seed) : k_fraction_(k_fraction), seed_(seed) {}
  GradientSet keep(const GradientSet& g, std::uint64_t step) const override;
  std::uint64_t transmitted_elements(const GradientSet& g, std::uint64_t step) const override;

 private:
  double k_fraction_;
  std::uint64_t seed_;
};

class Fp16Filter final : public GradientFilter {
 public:
  GradientSet keep(const GradientSet& g, std::uint64_t step) const override;
  std::uint64_t transmitted_elements(const GradientSet& g, std::uint64_t step) const override;
};

// Residual accumulation around any filter: G += coeff * residuals before
// filtering, residuals = G - kept afterwards.
class ErrorFeedback {
 public:
  ErrorFeedback(const std::vector<std::uint64_t>& numels, EfSchedule schedule);

  GradientSet step(const GradientSet& gradients, const GradientFilter& filter);

  const GradientSet& residuals() const { return residuals_; }
  std::uint64_t num_steps() const { return num_steps_; }

 private:
  GradientSet residuals_;
  EfSchedule schedule_;
  std::uint64_t num_steps_ = 0;
};

}  // namespace covap
