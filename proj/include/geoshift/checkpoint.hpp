#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>

#include "geoshift/model.hpp"

namespace geoshift {

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::string stage;          // "base", "aggregator", "adapt"
  int64_t step = 0;
  nlohmann::json config;      // effective experiment config snapshot
  nlohmann::json metrics;     // e.g. {"source_val_ap50": ...}
};

/// Layout: 8-byte magic "GSHFTCKP", u32 version, u64 header length, JSON
/// header (info, detector architecture, aggregator kind, homography set,
/// tensor table), then every tensor as raw little-endian doubles in table
/// order. Loading restores the model bit-exactly.
void save_checkpoint(const std::filesystem::path& path, GeoDetector& model, const CheckpointInfo& info);
GeoDetector load_checkpoint(const std::filesystem::path& path, CheckpointInfo* info = nullptr);

std::string to_string(AggregatorKind kind);
AggregatorKind aggregator_kind_from_string(const std::string& s);

nlohmann::json detector_config_to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

}  // namespace geoshift
