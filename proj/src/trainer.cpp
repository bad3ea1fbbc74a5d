#include "covap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <thread>

#include "covap/errors.hpp"
#include "covap/rng.hpp"

namespace covap {

Objective objective_from_name(const std::string& name) {
  if (name == "linear-regression") return Objective::kLinearRegression;
  if (name == "logistic-regression") return Objective::kLogisticRegression;
  if (name == "two-layer-mlp") return Objective::kTwoLayerMlp;
  throw InvalidInput("unknown objective '" + name + "'");
}

const char* objective_name(Objective objective) {
  switch (objective) {
    case Objective::kLinearRegression: return "linear-regression";
    case Objective::kLogisticRegression: return "logistic-regression";
    case Objective::kTwoLayerMlp: return "two-layer-mlp";
  }
  return "unknown";
}

std::uint64_t ToyModelSpec::dimension() const {
  std::uint64_t d = 0;
  for (std::uint64_t s : layer_sizes) d += s;
  return d;
}

std::vector<double> allreduce_mean(const std::vector<std::vector<double>>& per_worker) {
  if (per_worker.empty()) throw InvalidInput("allreduce needs at least one worker vector");
  const std::size_t n = per_worker[0].size();
  for (const auto& v : per_worker)
    if (v.size() != n) throw InvalidInput("allreduce vectors differ in length");

  std::vector<double> out(n, 0.0);
  for (const auto& v : per_worker)
    for (std::size_t i = 0; i < n; ++i) out[i] += v[i];
  const double inv = 1.0 / static_cast<double>(per_worker.size());
  for (double& x : out) x *= inv;
  return out;
}

namespace {

struct Dataset {
  std::vector<double> inputs;   // samples x input_dim, row major
  std::vector<double> targets;  // samples
  std::uint64_t samples = 0;
  std::uint64_t input_dim = 0;
};

struct MlpShape {
  std::uint64_t input_dim = 0;
  std::uint64_t hidden = 0;
};

MlpShape mlp_shape(const ToyModelSpec& spec) {
  const std::uint64_t d = spec.dimension();
  const std::uint64_t h = spec.mlp_hidden;
  if (h < 1 || d <= 2 * h + 1 || (d - 2 * h - 1) % h != 0)
    throw InvalidInput("mlp parameter dimension must equal hidden*(input+2)+1");
  return MlpShape{(d - 2 * h - 1) / h, h};
}

std::uint64_t input_dimension(const ToyModelSpec& spec) {
  if (spec.objective == Objective::kTwoLayerMlp) return mlp_shape(spec).input_dim;
  return spec.dimension();
}

// Teacher parameters shared by all workers, drawn from the run seed only.
// Network weights shrink with fan-in so the teacher's activations stay in the
// responsive range of tanh.
std::vector<double> teacher_params(const ToyModelSpec& spec, std::uint64_t seed) {
  SplitMix64 rng(mix_seed(seed, 0x7eacULL));
  std::vector<double> params(spec.dimension());
  for (double& p : params) p = rng.next_normal();
  if (spec.objective == Objective::kTwoLayerMlp) {
    const auto shape = mlp_shape(spec);
    const double w1_scale = 1.0 / std::sqrt(static_cast<double>(shape.input_dim));
    const double w2_scale = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
    std::uint64_t i = 0;
    for (; i < shape.hidden * shape.input_dim; ++i) params[i] *= w1_scale;
    i += shape.hidden;  // hidden biases stay unit scale
    for (; i < params.size(); ++i) params[i] *= w2_scale;
  }
  return params;
}

double mlp_forward(const ToyModelSpec& spec, const std::vector<double>& params,
                   const double* x, std::vector<double>& hidden_buf) {
  const auto shape = mlp_shape(spec);
  const std::uint64_t h = shape.hidden;
  const std::uint64_t in = shape.input_dim;
  const double* w1 = params.data();
  const double* b1 = w1 + h * in;
  const double* w2 = b1 + h;
  const double b2 = *(w2 + h);

  hidden_buf.resize(h);
  double out = b2;
  for (std::uint64_t j = 0; j < h; ++j) {
    double z = b1[j];
    const double* row = w1 + j * in;
    for (std::uint64_t i = 0; i < in; ++i) z += row[i] * x[i];
    hidden_buf[j] = std::tanh(z);
    out += w2[j] * hidden_buf[j];
  }
  return out;
}

Dataset make_dataset(const ToyModelSpec& spec, std::uint64_t seed, std::uint32_t worker,
                     std::uint64_t samples, double noise_std,
                     const std::vector<double>& teacher) {
  Dataset data;
  data.samples = samples;
  data.input_dim = input_dimension(spec);
  data.inputs.resize(samples * data.input_dim);
  data.targets.resize(samples);

  SplitMix64 rng(mix_seed(seed, 0x100 + worker));
  for (double& x : data.inputs) x = rng.next_normal();

  std::vector<double> hidden_buf;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const double* row = data.inputs.data() + s * data.input_dim;
    double clean = 0.0;
    switch (spec.objective) {
      case Objective::kLinearRegression: {
        for (std::uint64_t i = 0; i < data.input_dim; ++i) clean += teacher[i] * row[i];
        data.targets[s] = clean + noise_std * rng.next_normal();
        break;
      }
      case Objective::kLogisticRegression: {
        for (std::uint64_t i = 0; i < data.input_dim; ++i) clean += teacher[i] * row[i];
        const double p = 1.0 / (1.0 + std::exp(-clean));
        data.targets[s] = rng.next_unit() < p ? 1.0 : 0.0;
        break;
      }
      case Objective::kTwoLayerMlp: {
        clean = mlp_forward(spec, teacher, row, hidden_buf);
        data.targets[s] = clean + noise_std * rng.next_normal();
        break;
      }
    }
  }
  return data;
}

// Local loss and gradient of the worker's shard at the given parameters.
double local_loss_grad(const ToyModelSpec& spec, const Dataset& data,
                       const std::vector<double>& params, std::vector<double>& grad) {
  const std::uint64_t n = data.samples;
  const std::uint64_t in = data.input_dim;
  grad.assign(params.size(), 0.0);
  double loss = 0.0;

  switch (spec.objective) {
    case Objective::kLinearRegression: {
      for (std::uint64_t s = 0; s < n; ++s) {
        const double* row = data.inputs.data() + s * in;
        double pred = 0.0;
        for (std::uint64_t i = 0; i < in; ++i) pred += params[i] * row[i];
        const double r = pred - data.targets[s];
        loss += 0.5 * r * r;
        for (std::uint64_t i = 0; i < in; ++i) grad[i] += r * row[i];
      }
      break;
    }
    case Objective::kLogisticRegression: {
      for (std::uint64_t s = 0; s < n; ++s) {
        const double* row = data.inputs.data() + s * in;
        double z = 0.0;
        for (std::uint64_t i = 0; i < in; ++i) z += params[i] * row[i];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double y = data.targets[s];
        const double eps = 1e-12;
        loss -= y * std::log(std::max(p, eps)) + (1.0 - y) * std::log(std::max(1.0 - p, eps));
        const double r = p - y;
        for (std::uint64_t i = 0; i < in; ++i) grad[i] += r * row[i];
      }
      break;
    }
    case Objective::kTwoLayerMlp: {
      const auto shape = mlp_shape(spec);
      const std::uint64_t h = shape.hidden;
      std::vector<double> hidden(h);
      const double* w2 = params.data() + h * in + h;
      double* gw1 = grad.data();
      double* gb1 = grad.data() + h * in;
      double* gw2 = grad.data() + h * in + h;
      double* gb2 = grad.data() + h * in + 2 * h;
      for (std::uint64_t s = 0; s < n; ++s) {
        const double* row = data.inputs.data() + s * in;
        const double out = mlp_forward(spec, params, row, hidden);
        const double r = out - data.targets[s];
        loss += 0.5 * r * r;
        *gb2 += r;
        for (std::uint64_t j = 0; j < h; ++j) {
          gw2[j] += r * hidden[j];
          const double dz = r * w2[j] * (1.0 - hidden[j] * hidden[j]);
          gb1[j] += dz;
          double* grow = gw1 + j * in;
          for (std::uint64_t i = 0; i < in; ++i) grow[i] += dz * row[i];
        }
      }
      break;
    }
  }

  const double inv = 1.0 / static_cast<double>(n);
  for (double& g : grad) g *= inv;
  return loss * inv;
}

// Zero start for the convex objectives; the network gets a small seeded
// random start because the all-zero point is a symmetric saddle.
std::vector<double> initial_params(const ToyModelSpec& spec, std::uint64_t seed) {
  std::vector<double> params(spec.dimension(), 0.0);
  if (spec.objective == Objective::kTwoLayerMlp) {
    SplitMix64 rng(mix_seed(seed, 0x1417ULL));
    const auto shape = mlp_shape(spec);
    const double w1_scale = 0.5 / std::sqrt(static_cast<double>(shape.input_dim));
    const double w2_scale = 0.5 / std::sqrt(static_cast<double>(shape.hidden));
    for (std::uint64_t i = 0; i < shape.hidden * shape.input_dim; ++i)
      params[i] = w1_scale * rng.next_normal();
    for (std::uint64_t i = shape.hidden * (shape.input_dim + 1); i < params.size() - 1; ++i)
      params[i] = w2_scale * rng.next_normal();
  }
  return params;
}

GradientSet split_by_tensors(const std::vector<double>& flat,
                             const std::vector<EffectiveTensor>& tensors) {
  GradientSet out;
  out.reserve(tensors.size());
  for (const auto& t : tensors)
    out.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(t.begin),
                     flat.begin() + static_cast<std::ptrdiff_t>(t.end));
  return out;
}

void add_flat(std::vector<double>& flat, const GradientSet& tensors,
              const std::vector<EffectiveTensor>& layout, double scale) {
  for (std::size_t t = 0; t < layout.size(); ++t)
    for (std::uint64_t i = 0; i < layout[t].numel(); ++i)
      flat[layout[t].begin + i] += scale * tensors[t][i];
}

}  // namespace

TrainRun train(const TrainConfig& config) {
  if (config.workers < 1) throw InvalidInput("training needs at least one worker");
  if (config.model.layer_sizes.empty()) throw InvalidInput("toy model needs layer sizes");
  if (config.samples_per_worker < 1) throw InvalidInput("samples_per_worker must be >= 1");

  ModelSpec synthetic;
  for (std::size_t i = 0; i < config.model.layer_sizes.size(); ++i)
    synthetic.layers.push_back(
        {"t" + std::to_string(i), config.model.layer_sizes[i], 4, 0.0});
  synthetic.bucket_cap_bytes = config.model.bucket_cap_bytes;

  BucketPlan plan = allocate_buckets(synthetic);
  const bool is_covap = config.compressor.scheme == Scheme::kCovap;
  if (is_covap && config.compressor.covap.interval > 1)
    plan = shard_plan(plan, config.compressor.covap.interval);
  const auto layout = effective_tensors(plan);
  const auto numels = effective_numels(plan);
  const std::uint64_t d = config.model.dimension();

  const auto teacher = teacher_params(config.model, config.seed);

  const std::uint32_t P = config.workers;
  std::vector<Dataset> shards;
  shards.reserve(P);
  for (std::uint32_t w = 0; w < P; ++w)
    shards.push_back(make_dataset(config.model, config.seed, w, config.samples_per_worker,
                                  config.noise_std, teacher));

  std::vector<std::vector<double>> params(P, initial_params(config.model, config.seed));
  std::vector<CompressorState> covap_states(P, CompressorState::zeros(numels));
  std::vector<ErrorFeedback> ef_states;
  std::unique_ptr<GradientFilter> filter;
  if (!is_covap && config.compressor.scheme != Scheme::kNone) {
    for (std::uint32_t w = 0; w < P; ++w)
      ef_states.emplace_back(numels, config.compressor.covap.ef);
    switch (config.compressor.scheme) {
      case Scheme::kTopk:
        filter = std::make_unique<TopkFilter>(config.compressor.k_fraction);
        break;
      case Scheme::kRandomk:
        filter = std::make_unique<RandomkFilter>(config.compressor.k_fraction, config.seed);
        break;
      case Scheme::kFp16:
        filter = std::make_unique<Fp16Filter>();
        break;
      default:
        break;
    }
  }

  TrainRun run;
  std::vector<std::vector<double>> grads(P, std::vector<double>(d, 0.0));
  std::vector<double> losses(P, 0.0);

  auto compute_gradients = [&]() {
    if (config.threaded && P > 1) {
      std::vector<std::thread> pool;
      pool.reserve(P);
      for (std::uint32_t w = 0; w < P; ++w)
        pool.emplace_back([&, w]() {
          losses[w] = local_loss_grad(config.model, shards[w], params[w], grads[w]);
        });
      for (auto& t : pool) t.join();
    } else {
      for (std::uint32_t w = 0; w < P; ++w)
        losses[w] = local_loss_grad(config.model, shards[w], params[w], grads[w]);
    }
  };

  auto global_loss = [&]() {
    double sum = 0.0;
    for (std::uint32_t w = 0; w < P; ++w) sum += losses[w];
    return sum / static_cast<double>(P);
  };

  for (std::uint64_t step = 0; step < config.steps; ++step) {
    compute_gradients();
    const double loss = global_loss();
    run.losses.push_back(loss);
    if (!std::isfinite(loss)) {
      run.diverged = true;
      break;
    }

    std::vector<double> update(d, 0.0);
    std::uint64_t bytes = 0;

    if (is_covap) {
      const auto& cfg = config.compressor.covap;
      std::vector<CompressedUpdate> updates;
      updates.reserve(P);
      for (std::uint32_t w = 0; w < P; ++w) {
        GradientSet g = split_by_tensors(grads[w], layout);
        if (w == 0) {
          // Contraction bookkeeping on the compensated gradient.
          GradientSet compensated = g;
          if (cfg.ef.enabled) {
            const double coeff = ef_coefficient(covap_states[w].num_steps, cfg.ef);
            for (std::size_t t = 0; t < compensated.size(); ++t)
              for (std::size_t i = 0; i < compensated[t].size(); ++i)
                compensated[t][i] += coeff * covap_states[w].residuals[t][i];
          }
          const auto selected =
              select_tensors(covap_states[w].num_steps, cfg.interval, layout.size(), cfg.rule);
          std::vector<bool> keep(layout.size(), false);
          for (std::size_t t : selected) keep[t] = true;
          double drop_sq = 0.0;
          double norm_sq = 0.0;
          for (std::size_t t = 0; t < compensated.size(); ++t)
            for (double v : compensated[t]) {
              norm_sq += v * v;
              if (!keep[t]) drop_sq += v * v;
            }
          run.contraction_drop_sq.push_back(drop_sq);
          run.contraction_norm_sq.push_back(norm_sq);
        }
        updates.push_back(covap_compress(g, covap_states[w], cfg));
      }

      // Only the selected tensors travel; average their payloads per tensor.
      CompressedUpdate mean = updates[0];
      for (std::size_t t = 0; t < mean.payload.size(); ++t) {
        std::vector<std::vector<double>> per_worker;
        per_worker.reserve(P);
        for (std::uint32_t w = 0; w < P; ++w) per_worker.push_back(updates[w].payload[t]);
        mean.payload[t] = allreduce_mean(per_worker);
        bytes += mean.payload[t].size() * sizeof(float);
      }
      const GradientSet dense = covap_decompress(mean, numels);
      add_flat(update, dense, layout, 1.0);
    } else if (config.compressor.scheme == Scheme::kNone) {
      update = allreduce_mean(grads);
      bytes = d * sizeof(float);
    } else {
      std::vector<std::vector<double>> kept_flat(P, std::vector<double>(d, 0.0));
      for (std::uint32_t w = 0; w < P; ++w) {
        GradientSet g = split_by_tensors(grads[w], layout);
        const GradientSet kept = ef_states[w].step(g, *filter);
        add_flat(kept_flat[w], kept, layout, 1.0);
        if (w == 0) {
          const std::uint64_t elems = filter->transmitted_elements(g, step);
          // Sparse payloads ship index+value pairs; half precision ships two
          // bytes per element.
          bytes = config.compressor.scheme == Scheme::kFp16 ? elems * 2 : elems * 8;
        }
      }
      update = allreduce_mean(kept_flat);
    }

    run.bytes_per_step.push_back(bytes);

    for (std::uint32_t w = 0; w < P; ++w)
      for (std::uint64_t i = 0; i < d; ++i) params[w][i] -= config.learning_rate * update[i];

    for (std::uint32_t w = 1; w < P; ++w)
      if (params[w] != params[0])
        throw Error("replica parameters drifted apart at step " + std::to_string(step));

    run.steps_completed = step + 1;
  }

  compute_gradients();
  run.final_loss = global_loss();
  run.final_params = params[0];
  return run;
}

ContractionAudit contraction_audit(const TrainRun& run, std::uint32_t interval) {
  if (interval < 1) throw InvalidInput("audit interval must be >= 1");
  ContractionAudit audit;
  const std::size_t n = run.contraction_drop_sq.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double norm = run.contraction_norm_sq[i];
    const double ratio = norm > 0.0 ? run.contraction_drop_sq[i] / norm : 0.0;
    audit.max_single = std::max(audit.max_single, ratio);
  }
  for (std::size_t w = 0; w + interval <= n; w += interval) {
    double sum = 0.0;
    for (std::size_t i = w; i < w + interval; ++i) {
      const double norm = run.contraction_norm_sq[i];
      sum += norm > 0.0 ? run.contraction_drop_sq[i] / norm : 0.0;
    }
    audit.windowed_ratios.push_back(sum / static_cast<double>(interval));
    audit.max_windowed = std::max(audit.max_windowed, audit.windowed_ratios.back());
  }
  return audit;
}

}  // namespace covap
