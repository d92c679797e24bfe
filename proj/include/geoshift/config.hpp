#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "geoshift/approx.hpp"
#include "geoshift/model.hpp"
#include "geoshift/synth.hpp"
#include "geoshift/training.hpp"

namespace geoshift {

/// Which dense mapping `fit-approx` approximates.
struct FitSettings {
  std::string mapping = "fov";  // "fov" or "viewpoint"
  FieldOfView src_fov{50.0, 26.0};
  FieldOfView dst_fov{90.0, 34.0};
  double pitch_deg = 25.0;
  double zoom = 1.5;
  int n = 5;
  int grid_rows = 64;
  int grid_cols = 64;
  FitConfig solver;

  DenseMapping dense_mapping() const;
};

struct SweepSettings {
  std::string param = "N";  // "N", "lambda" or "tau"
  std::vector<double> values = {1, 3, 5};
  std::vector<uint64_t> seeds = {1};
};

inline ShiftSpec fov_shift() {
  ShiftSpec s;
  s.kind = ShiftKind::fov;
  return s;
}

struct ExperimentConfig {
  uint64_t seed = 1;  // governs scenes, initialization, sampling and data order
  std::string output_dir = "runs/default";
  SceneSpec scene;
  ShiftSpec shift = fov_shift();
  SplitCounts counts;
  DetectorConfig detector;
  BaseTrainConfig base;
  AggregatorTrainConfig aggregator;
  AdaptConfig adapt;
  EvalOptions eval;
  FitSettings fit;
  SweepSettings sweep;

  /// Copies of the specs with the experiment seed applied.
  SceneSpec seeded_scene() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// `tree` must be complete (every key of to_json(ExperimentConfig{})).
/// Throws Errc::schema naming the offending path, Errc::configuration for
/// out-of-range values.
ExperimentConfig experiment_config_from_json(const nlohmann::json& tree);

/// Default tree; the schema every overlay is checked against.
nlohmann::json default_config_tree();

/// Recursively overlays `overlay` onto `base`. Keys absent from `base` and
/// values whose kind (object, array, string, boolean, number) differs from
/// the base raise Errc::schema with the dotted path.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overlay);

/// "a.b.c=value" with value parsed as JSON, or taken as a string when it
/// does not parse. Same schema rules as merge_config.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Defaults, then the file (if any), then overrides in order.
nlohmann::json load_config_tree(const std::filesystem::path& file, const std::vector<std::string>& overrides);

}  // namespace geoshift
