#pragma once

// Persisted scenario and suite reports.
//
//   report.json / suite.json  full structured report, versioned
//   tasks.csv                 task_id,before,after_drift,ae_baseline,unlearned
//   metrics_long.csv          one row per (unit or scenario, task, condition)
//
// The CSVs carry no timings, so repeated runs give identical bytes.

#include <filesystem>
#include <string>
#include <variant>

#include "cdu/harness.hpp"

namespace cdu {

inline constexpr int kReportVersion = 1;

Json to_json(const ScenarioReport& r);
ScenarioReport scenario_report_from_json(const Json& j);
Json to_json(const SuiteReport& s);
SuiteReport suite_report_from_json(const Json& j);

/// Equality of everything except wall-clock timings.
bool same_results(const ScenarioReport& a, const ScenarioReport& b);

std::string tasks_csv(const ScenarioReport& r);
std::string tasks_csv(const SuiteReport& s);
std::string long_csv(const ScenarioReport& r);
std::string long_csv(const SuiteReport& s);
/// One row per scenario: seed, fault, losses and the keep decision.
std::string scenarios_csv(const SuiteReport& s);

void write_report(const ScenarioReport& r, const std::filesystem::path& dir);
void write_report(const SuiteReport& s, const std::filesystem::path& dir);

using AnyReport = std::variant<ScenarioReport, SuiteReport>;
AnyReport load_report(const std::filesystem::path& dir);

std::string format_table(const AnyReport& report);
std::string format_csv(const AnyReport& report);

/// Shortest decimal that parses back to the same double; "nan" for NaN.
std::string format_number(double v);

}  // namespace cdu
