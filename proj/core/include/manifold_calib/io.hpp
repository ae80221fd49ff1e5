#pragma once

// Text serialization of pipeline artifacts. Every file carries the hash of
// the configuration and the seed that produced it; numbers use 17
// significant digits so values round-trip exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "manifold_calib/calibration.hpp"
#include "manifold_calib/contact_sim.hpp"
#include "manifold_calib/mlp.hpp"

namespace manifold_calib {

struct ArtifactMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// FNV-1a 64 over the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

std::string format_double(double v);

void write_manifold_csv(const std::filesystem::path& path, const ManifoldSet& manifold,
                        const ArtifactMeta& meta);
ManifoldSet read_manifold_csv(const std::filesystem::path& path);

void write_dataset_csv(const std::filesystem::path& path, const std::vector<ProjectionSample>& samples,
                       const ArtifactMeta& meta);
std::vector<ProjectionSample> read_dataset_csv(const std::filesystem::path& path);

/// One JSON object per line: {"q": [...]}, preceded by a metadata line.
void write_observations_jsonl(const std::filesystem::path& path,
                              const std::vector<ContactObservation>& observations,
                              const ArtifactMeta& meta);
std::vector<ContactObservation> read_observations_jsonl(const std::filesystem::path& path);

nlohmann::json params_to_json(const KinematicParams& params);
KinematicParams params_from_json(const nlohmann::json& doc);
nlohmann::json result_to_json(const CalibrationResult& result);
nlohmann::json report_to_json(const ErrorReport& report);

/// Human-readable table of estimation errors next to the initial errors.
std::string format_report_table(const ErrorReport& report);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace manifold_calib
