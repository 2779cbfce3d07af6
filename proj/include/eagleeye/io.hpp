#pragma once

#include <string>
#include <vector>

#include "eagleeye/attacks.hpp"
#include "eagleeye/bench.hpp"
#include "eagleeye/detector.hpp"

namespace eagleeye {

/// One JSON record per line; field sets are fixed and versioned where the
/// formats are consumed downstream.
void write_attack_results(const std::vector<AttackResult>& results, const std::string& path);
void write_detection_reports(const std::vector<DetectionReport>& reports, const std::string& path);

std::string detection_report_record(const DetectionReport& rep);
std::string attack_result_record(const AttackResult& res);

/// ratio,cdf pairs, ascending; a plain-text cumulative distribution.
void write_ratio_distribution(const RatioDistribution& dist, const std::string& path);

void write_resilience_matrix(const ResilienceMatrix& m, const std::string& json_path,
                             const std::string& table_path);
void write_counter_outcome(const CounterOutcome& c, const std::string& json_path,
                           const std::string& table_path);
void write_synergy_outcome(const SynergyOutcome& s, const std::string& json_path,
                           const std::string& table_path);

/// Wall-clock and environment facts live in a sidecar so result files stay
/// byte-identical across reruns.
void write_run_meta(const std::string& path, const std::string& command);

}  // namespace eagleeye
