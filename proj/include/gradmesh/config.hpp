#pragma once

#include "gradmesh/harness.hpp"

#include "json.hpp"

#include <string>

namespace gradmesh {

// Flat key-value config with [experiment], [model], [data], [pricing]
// and [latency] sections. Unknown keys are configuration errors.
ExperimentConfig config_from_ini(const std::string& text);
ExperimentConfig config_from_ini_file(const std::string& path);

// Applies one dotted-key override, e.g. "experiment.workers=8".
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const nlohmann::json& j);

nlohmann::json result_to_json(const ExperimentResult& result);

// One row per epoch, RFC-4180 style with a mandatory header row.
std::string epochs_csv(const ExperimentResult& result);

// Final-epoch summary mirroring the published cost table columns
// (Framework, Total Time, Peak RAM, Cost/Worker, Total Cost).
std::string report_markdown(const ExperimentResult& result);
std::string report_csv(const ExperimentResult& result);
nlohmann::json report_json(const ExperimentResult& result);

std::string sweep_csv_header();
std::string sweep_csv_row(const std::string& key, const std::string& value,
                          const ExperimentResult& result);

// Shortest round-trip decimal representation.
std::string format_double(double v);

bool config_equal(const ExperimentConfig& a, const ExperimentConfig& b);

} // namespace gradmesh
