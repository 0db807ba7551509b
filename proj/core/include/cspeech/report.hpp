#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cspeech/evaluation.hpp"

namespace cspeech {

/// Everything needed to reconstruct how a report was produced. Wall-clock
/// values are deliberately absent so that equal runs give equal reports.
struct Provenance {
  std::string tool_version;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::vector<std::string> backends;
  std::vector<std::string> strategies;
  std::string scorer;  // endpoint description, or "disabled"
  std::map<std::string, std::string> model_versions;
  std::vector<std::string> warnings;
};

struct RunReport {
  Provenance provenance;
  std::size_t n_records = 0;
  std::size_t n_failed = 0;
  MetricReport vanilla;  // grouped by (dataset, backend, strategy)
  PrecisionGrid precision;
  std::vector<Exclusion> excluded;
  std::vector<std::string> notes;
};

RunReport build_report(std::span<const MetricRow> rows, Provenance provenance,
                       std::size_t n_records, std::size_t n_failed,
                       std::vector<Exclusion> excluded, std::vector<std::string> notes);

nlohmann::ordered_json to_json(const RunReport& report);

/// Aligned-column tables: one metrics table with a column per kMetricNames
/// entry ("-" where absent) and one type-precision grid per dataset/backend.
std::string render_text(const RunReport& report);

/// Writes report.json and report.txt into dir.
void write_report(const std::filesystem::path& dir, const RunReport& report);

}  // namespace cspeech
