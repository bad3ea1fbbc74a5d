#include "covap/compress.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "covap/errors.hpp"

namespace covap {

std::vector<std::size_t> select_tensors(std::uint64_t num_steps, std::uint32_t interval,
                                        std::size_t tensor_count, SelectionRule rule) {
  if (interval < 1) throw InvalidInput("selection interval must be >= 1");
  if (tensor_count < 1) throw InvalidInput("selection needs at least one tensor");

  const std::uint64_t phase = num_steps % interval;
  std::vector<std::size_t> selected;
  for (std::size_t t = 0; t < tensor_count; ++t) {
    const std::uint64_t r = t % interval;
    const bool keep = (rule == SelectionRule::kMatchStep)
                          ? r == phase
                          : (r + phase) % interval == 0;
    if (keep) selected.push_back(t);
  }
  return selected;
}

double ef_coefficient(std::uint64_t num_steps, const EfSchedule& schedule) {
  if (schedule.ascend_steps < 1) throw InvalidInput("ascend_steps must be >= 1");
  const double raised = schedule.init_value +
                        static_cast<double>(num_steps / schedule.ascend_steps) * schedule.ascend_range;
  return std::min(raised, 1.0);
}

CompressorState CompressorState::zeros(const std::vector<std::uint64_t>& numels) {
  CompressorState state;
  state.residuals.reserve(numels.size());
  for (std::uint64_t n : numels) state.residuals.emplace_back(n, 0.0);
  return state;
}

std::uint64_t CompressedUpdate::payload_elements() const {
  std::uint64_t total = 0;
  for (const auto& tensor : payload) total += tensor.size();
  return total;
}

CompressedUpdate covap_compress(const GradientSet& gradients, CompressorState& state,
                                const CovapConfig& config) {
  if (gradients.size() != state.residuals.size())
    throw InvalidState("gradient tensor count does not match compressor state");
  for (std::size_t t = 0; t < gradients.size(); ++t)
    if (gradients[t].size() != state.residuals[t].size())
      throw InvalidState("gradient shape does not match residual shape at tensor " +
                         std::to_string(t));

  GradientSet compensated = gradients;
  if (config.ef.enabled) {
    const double coeff = ef_coefficient(state.num_steps, config.ef);
    for (std::size_t t = 0; t < compensated.size(); ++t)
      for (std::size_t i = 0; i < compensated[t].size(); ++i)
        compensated[t][i] += coeff * state.residuals[t][i];
  }

  CompressedUpdate update;
  update.step = state.num_steps;
  update.selected = select_tensors(state.num_steps, config.interval, gradients.size(), config.rule);

  std::vector<bool> keep(gradients.size(), false);
  for (std::size_t t : update.selected) keep[t] = true;

  for (std::size_t t = 0; t < compensated.size(); ++t) {
    if (keep[t]) {
      update.payload.push_back(compensated[t]);
      std::fill(state.residuals[t].begin(), state.residuals[t].end(), 0.0);
    } else {
      state.residuals[t] = compensated[t];
    }
  }

  ++state.num_steps;
  return update;
}

GradientSet covap_decompress(const CompressedUpdate& update,
                             const std::vector<std::uint64_t>& numels) {
  GradientSet out;
  out.reserve(numels.size());
  for (std::uint64_t n : numels) out.emplace_back(n, 0.0);

  if (update.selected.size() != update.payload.size())
    throw InvalidInput("payload count does not match selected tensor count");
  for (std::size_t i = 0; i < update.selected.size(); ++i) {
    const std::size_t t = update.selected[i];
    if (t >= out.size()) throw InvalidInput("selected tensor index out of range");
    if (update.payload[i].size() != out[t].size())
      throw InvalidInput("payload shape mismatch at tensor " + std::to_string(t));
    out[t] = update.payload[i];
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::size_t sparsifier_k(std::size_t d, double k_fraction) {
  if (d == 0) throw InvalidInput("cannot sparsify an empty vector");
  if (!(k_fraction > 0.0) || k_fraction > 1.0)
    throw InvalidInput("k_fraction must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::ceil(k_fraction * static_cast<double>(d)));
  return std::min(std::max<std::size_t>(k, 1), d);
}

}  // namespace

SparseSelection topk_compress(std::span<const double> x, double k_fraction) {
  const std::size_t k = sparsifier_k(x.size(), k_fraction);

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) {
    return std::abs(x[a]) > std::abs(x[b]);
  });

  SparseSelection out;
  out.indices.assign(order.begin(), order.begin() + k);
  for (std::size_t idx : out.indices) out.values.push_back(x[idx]);
  return out;
}

SparseSelection randomk_compress(std::span<const double> x, double k_fraction,
                                 std::uint64_t seed) {
  const std::size_t k = sparsifier_k(x.size(), k_fraction);
  SplitMix64 rng(seed);
  SparseSelection out;
  out.indices = sample_without_replacement(x.size(), k, rng);
  for (std::size_t idx : out.indices) out.values.push_back(x[idx]);
  return out;
}

std::vector<std::size_t> sample_without_replacement(std::size_t d, std::size_t k,
                                                    SplitMix64& rng) {
  std::vector<std::size_t> pool(d);
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(d - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::uint16_t half_bits_from_float(float value, bool* saturated) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
  const std::uint32_t abs_bits = bits & 0x7fffffffu;

  if (abs_bits > 0x7f800000u) return static_cast<std::uint16_t>(sign | 0x7e00u);  // NaN

  // Largest finite half is 65504; anything above clamps instead of becoming inf.
  if (std::bit_cast<float>(abs_bits) > 65504.0f) {
    if (saturated != nullptr) *saturated = true;
    return static_cast<std::uint16_t>(sign | 0x7bffu);
  }

  const std::int32_t exp = static_cast<std::int32_t>((abs_bits >> 23) & 0xff) - 127;
  std::uint32_t mant = abs_bits & 0x7fffffu;

  if (exp < -24) return sign;  // underflows to zero even after rounding
  if (exp < -14) {
    // Subnormal half: shift the significand (with hidden bit) into place.
    mant |= 0x800000u;
    const std::uint32_t shift = static_cast<std::uint32_t>(-14 - exp) + 13;
    const std::uint32_t half_mant = mant >> shift;
    const std::uint32_t rest = mant & ((1u << shift) - 1);
    const std::uint32_t halfway = 1u << (shift - 1);
    std::uint32_t rounded = half_mant;
    if (rest > halfway || (rest == halfway && (half_mant & 1u))) ++rounded;
    return static_cast<std::uint16_t>(sign | rounded);
  }

  std::uint32_t half_exp = static_cast<std::uint32_t>(exp + 15);
  std::uint32_t half_mant = mant >> 13;
  const std::uint32_t rest = mant & 0x1fffu;
  if (rest > 0x1000u || (rest == 0x1000u && (half_mant & 1u))) {
    ++half_mant;
    if (half_mant == 0x400u) {
      half_mant = 0;
      ++half_exp;
    }
  }
  if (half_exp >= 31) {
    if (saturated != nullptr) *saturated = true;
    return static_cast<std::uint16_t>(sign | 0x7bffu);
  }
  return static_cast<std::uint16_t>(sign | (half_exp << 10) | half_mant);
}

float float_from_half_bits(std::uint16_t bits) {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exp = (bits >> 10) & 0x1fu;
  const std::uint32_t mant = bits & 0x3ffu;

  if (exp == 0) {
    if (mant == 0) return std::bit_cast<float>(sign);
    // Normalize the subnormal.
    std::uint32_t m = mant;
    std::int32_t e = -14;
    while ((m & 0x400u) == 0) {
      m <<= 1;
      --e;
    }
    m &= 0x3ffu;
    return std::bit_cast<float>(sign | (static_cast<std::uint32_t>(e + 127) << 23) | (m << 13));
  }
  if (exp == 31) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mant << 13));
  }
  return std::bit_cast<float>(sign | ((exp - 15 + 127) << 23) | (mant << 13));
}

TensorVec fp16_roundtrip(std::span<const double> x, std::uint64_t* saturation_count) {
  TensorVec out;
  out.reserve(x.size());
  for (double v : x) {
    bool saturated = false;
    const std::uint16_t h = half_bits_from_float(static_cast<float>(v), &saturated);
    if (saturated && saturation_count != nullptr) ++*saturation_count;
    out.push_back(static_cast<double>(float_from_half_bits(h)));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t total_elements(const GradientSet& g) {
  std::uint64_t total = 0;
  for (const auto& tensor : g) total += tensor.size();
  return total;
}

}  // namespace

std::uint64_t IdentityFilter::transmitted_elements(const GradientSet& g, std::uint64_t) const {
  return total_elements(g);
}

GradientSet CovapFilter::keep(const GradientSet& g, std::uint64_t step) const {
  const auto selected = select_tensors(step, interval_, g.size(), rule_);
  GradientSet out;
  out.reserve(g.size());
  for (const auto& tensor : g) out.emplace_back(tensor.size(), 0.0);
  for (std::size_t t : selected) out[t] = g[t];
  return out;
}

std::uint64_t CovapFilter::transmitted_elements(const GradientSet& g, std::uint64_t step) const {
  std::uint64_t total = 0;
  for (std::size_t t : select_tensors(step, interval_, g.size(), rule_)) total += g[t].size();
  return total;
}

GradientSet TopkFilter::keep(const GradientSet& g, std::uint64_t) const {
  GradientSet out;
  out.reserve(g.size());
  for (const auto& tensor : g) {
    TensorVec kept(tensor.size(), 0.0);
    const auto sel = topk_compress(tensor, k_fraction_);
    for (std::size_t i = 0; i < sel.indices.size(); ++i) kept[sel.indices[i]] = sel.values[i];
    out.push_back(std::move(kept));
  }
  return out;
}

std::uint64_t TopkFilter::transmitted_elements(const GradientSet& g, std::uint64_t) const {
  std::uint64_t total = 0;
  for (const auto& tensor : g) total += sparsifier_k(tensor.size(), k_fraction_);
  return total;
}

GradientSet RandomkFilter::keep(const GradientSet& g, std::uint64_t step) const {
  GradientSet out;
  out.reserve(g.size());
  for (std::size_t t = 0; t < g.size(); ++t) {
    TensorVec kept(g[t].size(), 0.0);
    const auto sel = randomk_compress(g[t], k_fraction_, mix_seed(seed_, step * 0x10001ULL + t));
    for (std::size_t i = 0; i < sel.indices.size(); ++i) kept[sel.indices[i]] = sel.values[i];
    out.push_back(std::move(kept));
  }
  return out;
}

std::uint64_t RandomkFilter::transmitted_elements(const GradientSet& g, std::uint64_t) const {
  std::uint64_t total = 0;
  for (const auto& tensor : g) total += sparsifier_k(tensor.size(), k_fraction_);
  return total;
}

GradientSet Fp16Filter::keep(const GradientSet& g, std::uint64_t) const {
  GradientSet out;
  out.reserve(g.size());
  for (const auto& tensor : g) out.push_back(fp16_roundtrip(tensor));
  return out;
}

std::uint64_t Fp16Filter::transmitted_elements(const GradientSet& g, std::uint64_t) const {
  return total_elements(g);  // element count unchanged; the byte model halves width
}

ErrorFeedback::ErrorFeedback(const std::vector<std::uint64_t>& numels, EfSchedule schedule)
    : schedule_(schedule) {
  residuals_.reserve(numels.size());
  for (std::uint64_t n : numels) residuals_.emplace_back(n, 0.0);
}

GradientSet ErrorFeedback::step(const GradientSet& gradients, const GradientFilter& filter) {
  if (gradients.size() != residuals_.size())
    throw InvalidState("gradient tensor count does not match error-feedback state");

  GradientSet compensated = gradients;
  if (schedule_.enabled) {
    const double coeff = ef_coefficient(num_steps_, schedule_);
    for (std::size_t t = 0; t < compensated.size(); ++t) {
      if (compensated[t].size() != residuals_[t].size())
        throw InvalidState("gradient shape mismatch at tensor " + std::to_string(t));
      for (std::size_t i = 0; i < compensated[t].size(); ++i)
        compensated[t][i] += coeff * residuals_[t][i];
    }
  }

  GradientSet kept = filter.keep(compensated, num_steps_);
  for (std::size_t t = 0; t < compensated.size(); ++t)
    for (std::size_t i = 0; i < compensated[t].size(); ++i)
      residuals_[t][i] = compensated[t][i] - kept[t][i];

  ++num_steps_;
  return kept;
}

}  // namespace covap
