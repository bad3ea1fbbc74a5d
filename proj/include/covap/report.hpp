#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "covap/experiment.hpp"
#include "covap/sim.hpp"
#include "covap/trainer.hpp"

namespace covap {

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string command;
};

nlohmann::json provenance_to_json(const Provenance& p);
nlohmann::json speedup_report_to_json(const SpeedupReport& report);
nlohmann::json profile_to_json(const ProfileResult& profile);
nlohmann::json experiment_to_json(const ExperimentResult& result, const Provenance& p);
nlohmann::json train_summary_to_json(const TrainRun& run, const Provenance& p);

// Interval rows iter,worker,tensor,kind,start_ms,end_ms paired from events.
void write_trace_csv(const std::string& path, const std::vector<IterationRecord>& iterations);
void write_iterations_csv(const std::string& path, const std::vector<IterationRecord>& iterations);
void write_ratio_csv(const std::string& path, const std::vector<RatioPoint>& curve);
void write_scaling_csv(const std::string& path, const std::vector<ScalingRow>& rows);
void write_train_csv(const std::string& path, const TrainRun& run);

// Chrome trace viewer document (one complete slice per phase block).
void write_chrome_trace(const std::string& path, const std::vector<IterationRecord>& iterations);

void write_text_file(const std::string& path, const std::string& content);

// Fixed-width table for terminal output.
std::string format_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

std::string format_ms(double value);

}  // namespace covap
