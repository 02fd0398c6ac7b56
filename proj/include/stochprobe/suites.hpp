#pragma once

// Invariant suites over seeded random instances, with JSON-lines reports.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace stochprobe {

struct RunConfig {
  std::uint64_t seed = 1;
  std::string suite;
  std::optional<int> instances;  // defaults per suite
  std::int64_t trials = 100'000;  // simulation suite
  int workers = 1;
  std::string out;  // JSON-lines path; empty for none
};

struct ReportRow {
  std::string suite;
  int instance = 0;
  bool pass = true;
  double oracle = 0.0;
  double solver = 0.0;
  double ratio = 1.0;
  std::map<std::string, double> baselines;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::string message;
};

struct Report {
  std::string suite;
  std::vector<ReportRow> rows;
  nlohmann::json summary = nlohmann::json::object();
  bool pass = true;  // every row passed and every aggregate check held
};

const std::vector<std::string>& suite_names();
int default_instances(const std::string& suite);  // throws ParameterError

// Throws ParameterError for an unknown suite. Rows are in instance order
// whatever the worker count.
Report run_suite(const RunConfig& config);

std::string to_jsonl(const Report& report);
std::string to_table(const Report& report);

}  // namespace stochprobe
