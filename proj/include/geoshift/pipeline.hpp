#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "geoshift/config.hpp"

namespace geoshift {

/// Artifact layout under the experiment output directory.
struct StageLayout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path base() const { return root / "base"; }
  std::filesystem::path aggregator() const { return root / "aggregator"; }
  std::filesystem::path adapt(const std::string& name = "adapt") const { return root / name; }
  std::filesystem::path fit() const { return root / "fit"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path sweep() const { return root / "sweep"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

std::string code_version();

/// {stage, code_version, seed, config, extra...}; written as manifest.json.
nlohmann::json make_manifest(const std::string& stage, const nlohmann::json& tree, const nlohmann::json& extra = {});
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

/// Accepts either a config tree or a stage manifest (whose "config" is used).
nlohmann::json config_tree_of(const nlohmann::json& file_contents);

/// Each stage reads its upstream artifacts from layout(tree.output_dir) and
/// raises Errc::dependency naming the stage to run when they are missing.
/// Every stage writes manifest.json next to its artifacts.
struct StageResult {
  std::filesystem::path dir;
  nlohmann::json metrics;
};

StageResult run_synth_gen(const nlohmann::json& tree);
StageResult run_train_base(const nlohmann::json& tree);
StageResult run_train_aggregator(const nlohmann::json& tree);

enum class AdaptStart { aggregator, base };
/// From `aggregator` the full method (or transforms_only, per config); from
/// `base` the plain mean teacher without homographies.
StageResult run_adapt(const nlohmann::json& tree, AdaptStart start, const std::string& name = "adapt");

StageResult run_eval(const nlohmann::json& tree, const std::filesystem::path& checkpoint, const std::string& split,
                     const std::string& name = "");
StageResult run_fit_approx(const nlohmann::json& tree, bool visualize);

/// For every sweep value and seed: a full base/aggregator/adapt pipeline in
/// sweep/<param>_<value>/seed_<seed>, then summary.json, summary.txt and
/// the AP-vs-value plot.
StageResult run_sweep(const nlohmann::json& tree);

}  // namespace geoshift
