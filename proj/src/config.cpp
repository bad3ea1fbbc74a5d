#include "covap/config.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "covap/errors.hpp"

namespace covap {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

double get_number(const json& j, const std::string& field, double fallback) {
  if (!j.contains(field)) return fallback;
  if (!j[field].is_number()) fail(field, "expected a number");
  return j[field].get<double>();
}

EfSchedule ef_from_json(const json& j) {
  EfSchedule ef;
  if (!j.is_object()) fail("covap.ef", "expected an object");
  ef.enabled = j.value("enabled", true);
  ef.init_value = get_number(j, "init_value", ef.init_value);
  ef.ascend_steps = j.value("ascend_steps", ef.ascend_steps);
  ef.ascend_range = get_number(j, "ascend_range", ef.ascend_range);
  if (ef.init_value < 0.0 || ef.init_value > 1.0) fail("covap.ef.init_value", "must be in [0, 1]");
  if (ef.ascend_steps < 1) fail("covap.ef.ascend_steps", "must be >= 1");
  if (ef.ascend_range < 0.0) fail("covap.ef.ascend_range", "must be non-negative");
  return ef;
}

}  // namespace

std::string hash_json(const json& j) {
  const std::string dump = j.dump();
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << hash;
  return out.str();
}

ExperimentConfig config_from_json(const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  ExperimentConfig config;
  config.config_hash = hash_json(j);
  config.name = j.value("name", "experiment");
  config.seed = j.value("seed", 1ULL);
  config.out_dir = j.value("out", "");

  if (j.contains("model")) {
    const auto& mj = j["model"];
    if (mj.is_string()) {
      const auto path = std::filesystem::path(base_dir) / mj.get<std::string>();
      std::ifstream in(path);
      if (!in) fail("model", "cannot open model file " + path.string());
      json inner;
      try {
        in >> inner;
      } catch (const json::parse_error& e) {
        fail("model", "parse error in " + path.string() + ": " + e.what());
      }
      config.model = model_from_json(inner);
    } else if (mj.is_object()) {
      try {
        config.model = model_from_json(mj);
      } catch (const Error& e) {
        fail("model", e.what());
      }
    } else {
      fail("model", "expected an object or a file path string");
    }
    config.has_model = true;
  }

  if (j.contains("cluster")) {
    const auto& cj = j["cluster"];
    config.cluster.workers = cj.value("workers", 1u);
    config.cluster.bandwidth_bps = get_number(cj, "bandwidth_bps", config.cluster.bandwidth_bps);
    config.cluster.latency_ms = get_number(cj, "latency_ms", config.cluster.latency_ms);
    config.cluster.allreduce_efficiency =
        get_number(cj, "allreduce_efficiency", config.cluster.allreduce_efficiency);
    if (cj.contains("skew_ms")) {
      if (!cj["skew_ms"].is_array()) fail("cluster.skew_ms", "expected an array");
      for (const auto& s : cj["skew_ms"]) config.cluster.skew_ms.push_back(s.get<double>());
    }
    try {
      config.cluster.validate();
    } catch (const Error& e) {
      fail("cluster", e.what());
    }
  }

  if (j.contains("phases")) {
    const auto& pj = j["phases"];
    config.phases.before_ms = get_number(pj, "before_ms", 0.0);
    config.phases.comp_ms = get_number(pj, "comp_ms", 0.0);
    config.phases.comm_ms = get_number(pj, "comm_ms", 0.0);
    try {
      config.phases.validate();
    } catch (const Error& e) {
      fail("phases", e.what());
    }
  }

  if (j.contains("compressor")) {
    const auto& sj = j["compressor"];
    const std::string scheme = sj.value("scheme", "none");
    try {
      config.compressor.scheme = scheme_from_name(scheme);
    } catch (const Error& e) {
      fail("compressor.scheme", e.what());
    }
    config.compressor.k_fraction = get_number(sj, "k_fraction", config.compressor.k_fraction);
    config.compressor.compress_on_stream = sj.value("compress_on_stream", true);
    if (config.compressor.scheme == Scheme::kTopk || config.compressor.scheme == Scheme::kRandomk) {
      if (!(config.compressor.k_fraction > 0.0) || config.compressor.k_fraction > 1.0)
        fail("compressor.k_fraction", "must be in (0, 1] for sparsifiers");
    }
  }

  if (j.contains("covap")) {
    const auto& vj = j["covap"];
    if (vj.contains("interval")) {
      if (vj["interval"].is_string()) {
        if (vj["interval"].get<std::string>() != "auto")
          fail("covap.interval", "expected an integer or \"auto\"");
        config.covap_auto_interval = true;
      } else if (vj["interval"].is_number_unsigned() || vj["interval"].is_number_integer()) {
        const auto iv = vj["interval"].get<std::int64_t>();
        if (iv < 1) fail("covap.interval", "must be >= 1");
        config.compressor.covap.interval = static_cast<std::uint32_t>(iv);
      } else {
        fail("covap.interval", "expected an integer or \"auto\"");
      }
    }
    const std::string selection = vj.value("selection", "narrative");
    if (selection == "narrative") {
      config.compressor.covap.rule = SelectionRule::kMatchStep;
    } else if (selection == "formula") {
      config.compressor.covap.rule = SelectionRule::kPlusStep;
    } else {
      fail("covap.selection", "expected \"narrative\" or \"formula\"");
    }
    if (vj.contains("ef")) config.compressor.covap.ef = ef_from_json(vj["ef"]);
  }

  if (j.contains("sweep")) {
    const auto& wj = j["sweep"];
    if (wj.contains("ratios")) {
      const auto& rj = wj["ratios"];
      if (rj.is_array()) {
        for (const auto& r : rj) config.sweep_ratios.push_back(r.get<std::uint32_t>());
      } else if (rj.is_object()) {
        const auto from = rj.value("from", 1u);
        const auto to = rj.value("to", 0u);
        for (std::uint32_t r = from; r <= to; ++r) config.sweep_ratios.push_back(r);
      } else {
        fail("sweep.ratios", "expected an array or {from, to}");
      }
      if (config.sweep_ratios.empty()) fail("sweep.ratios", "range is empty");
    }
    if (wj.contains("workers")) {
      for (const auto& w : wj["workers"]) config.sweep_workers.push_back(w.get<std::uint32_t>());
      if (config.sweep_workers.empty()) fail("sweep.workers", "range is empty");
    }
  }

  config.iterations = j.value("iterations", 1ULL);

  if (j.contains("train")) {
    const auto& tj = j["train"];
    config.has_train = true;
    auto& train = config.train;
    try {
      train.model.objective = objective_from_name(tj.value("objective", "linear-regression"));
    } catch (const Error& e) {
      fail("train.objective", e.what());
    }
    if (!tj.contains("layer_sizes") || !tj["layer_sizes"].is_array())
      fail("train.layer_sizes", "expected an array of parameter counts");
    for (const auto& s : tj["layer_sizes"])
      train.model.layer_sizes.push_back(s.get<std::uint64_t>());
    train.model.bucket_cap_bytes = tj.value("bucket_cap_bytes", train.model.bucket_cap_bytes);
    train.model.mlp_hidden = tj.value("mlp_hidden", train.model.mlp_hidden);
    train.workers = tj.value("workers", train.workers);
    train.steps = tj.value("steps", train.steps);
    train.samples_per_worker = tj.value("samples_per_worker", train.samples_per_worker);
    train.learning_rate = get_number(tj, "learning_rate", train.learning_rate);
    train.noise_std = get_number(tj, "noise_std", train.noise_std);
    train.threaded = tj.value("threaded", false);
    train.seed = config.seed;
    train.compressor = config.compressor;
  }

  if (j.contains("expected")) {
    const auto& ej = j["expected"];
    if (ej.contains("s_ovlp")) config.expected_s_ovlp = ej["s_ovlp"].get<double>();
    if (ej.contains("s_ls")) config.expected_s_ls = ej["s_ls"].get<double>();
  }

  config.validate();
  return config;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("parse error in " + path + ": " + e.what());
  }
  return config_from_json(j, std::filesystem::path(path).parent_path().string());
}

void ExperimentConfig::validate() const {
  if (compressor.scheme == Scheme::kCovap && !covap_auto_interval &&
      compressor.covap.interval < 1)
    throw ConfigError("config field 'covap.interval': must be >= 1");
  if (iterations < 1) throw ConfigError("config field 'iterations': must be >= 1");
  if (has_train && train.model.layer_sizes.empty())
    throw ConfigError("config field 'train.layer_sizes': must be non-empty");
}

std::uint32_t resolve_interval(const ExperimentConfig& config, double ccr_value) {
  if (config.covap_auto_interval) return choose_interval(ccr_value);
  return config.compressor.covap.interval;
}

}  // namespace covap
