// SPDX-License-Identifier: Apache-2.0
//
// Artifact plumbing: JSON scenario configs, per-cycle CSV, summary and
// manifest JSON, beamformer snapshots, and raw I/Q dumps.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dcbf/beamform.hpp"
#include "dcbf/scenario.hpp"
#include "json.hpp"

namespace dcbf {

using json = nlohmann::json;

inline constexpr const char* kCycleSchema = "dcbf-cycles/1";

/// Parses a scenario config. Unknown keys and type errors raise ConfigError
/// with the JSON path of the offending field, e.g. "mesh.n_nodes: ...".
ScenarioConfig parse_scenario_config(const json& j);
json to_json(const ScenarioConfig& cfg);

/// Reads and parses a config file; I/O failures raise std::runtime_error.
json read_json_file(const std::filesystem::path& path);

/// Applies "dotted.path=value". The value is parsed as JSON when possible and
/// taken as a string otherwise. Throws ConfigError on a malformed override.
void apply_override(json& j, const std::string& assignment);

json to_json(const Beamformer& bf);
Beamformer beamformer_from_json(const json& j);

/// Hex FNV-1a hash of the canonical config dump.
std::string manifest_hash(const json& config);

std::vector<std::string> cycle_csv_columns(std::size_t n_nodes);
void write_cycles_csv(std::ostream& os, const std::vector<CycleRecord>& records, std::size_t n_nodes,
                      const std::string& hash);

struct CsvTable {
  std::string comment;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& is);

json summary_json(const ScenarioSummary& s, const std::string& hash);

struct RunManifest {
  json config;
  std::uint64_t seed = 0;
  std::string artifact_version;
  std::vector<std::string> outputs;
  double start_virtual_s = 0.0;
  double end_virtual_s = 0.0;

  json to_json() const;
};

/// Interleaved float32 little-endian I/Q; the sidecar lists the layout.
void write_iq_dump(const std::filesystem::path& bin_path, const ComplexSignal& x, const FrameLayout* layout,
                   const std::string& description);

}  // namespace dcbf
