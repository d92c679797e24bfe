#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "geoshift/pipeline.hpp"
#include "geoshift/plot.hpp"
#include "support.hpp"

using namespace geoshift;
using namespace geoshift::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_tree(const fs::path& root) {
  json t = default_config_tree();
  t["output_dir"] = root.string();
  t["seed"] = 3;
  t["scene"]["image_size"] = 32;
  t["detector"]["image_size"] = 32;
  t["counts"] = {{"source_train", 12}, {"source_val", 6}, {"target_train", 12}, {"target_val", 6}};
  t["base"]["steps"] = 3;
  t["base"]["batch_size"] = 4;
  t["aggregator"]["steps"] = 2;
  t["aggregator"]["num_transforms"] = 2;
  t["aggregator"]["batch_size"] = 2;
  t["adapt"]["steps"] = 3;
  t["adapt"]["warmup_steps"] = 1;
  t["adapt"]["eval_every"] = 2;
  return t;
}

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct TempRoot {
  fs::path path;
  explicit TempRoot(const std::string& name) : path(fs::temp_directory_path() / ("geoshift_pipeline_" + name)) {
    fs::remove_all(path);
  }
  ~TempRoot() { fs::remove_all(path); }
};

}  // namespace

TEST(Pipeline, MissingUpstreamNamesTheStage) {
  TempRoot root("deps");
  const json tree = tiny_tree(root.path);
  auto message_of = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::dependency);
      return std::string(e.what());
    }
    ADD_FAILURE() << "no error";
    return std::string();
  };
  EXPECT_NE(message_of([&] { run_train_base(tree); }).find("synth-gen"), std::string::npos);
  run_synth_gen(tree);
  EXPECT_NE(message_of([&] { run_train_aggregator(tree); }).find("train-base"), std::string::npos);
  EXPECT_NE(message_of([&] { run_adapt(tree, AdaptStart::aggregator); }).find("train-aggregator"), std::string::npos);
  EXPECT_NE(message_of([&] { run_adapt(tree, AdaptStart::base); }).find("train-base"), std::string::npos);
}

TEST(Pipeline, DatasetMustMatchTheConfig) {
  TempRoot root("mismatch");
  json tree = tiny_tree(root.path);
  run_synth_gen(tree);
  tree["seed"] = 4;
  EXPECT_EQ(code_of([&] { run_train_base(tree); }), Errc::configuration);
}

TEST(Pipeline, StagesReplayBitIdenticallyFromTheirManifests) {
  TempRoot a("replay_a"), b("replay_b");
  const json tree = tiny_tree(a.path);
  run_synth_gen(tree);
  run_train_base(tree);
  run_train_aggregator(tree);
  run_adapt(tree, AdaptStart::aggregator);

  // Replay every stage into a second directory from the recorded manifests.
  for (const char* stage : {"data", "base", "aggregator", "adapt"}) {
    json replay = config_tree_of(read_json(a.path / stage / "manifest.json"));
    replay["output_dir"] = b.path.string();
    if (std::string(stage) == "data") run_synth_gen(replay);
    if (std::string(stage) == "base") run_train_base(replay);
    if (std::string(stage) == "aggregator") run_train_aggregator(replay);
    if (std::string(stage) == "adapt") run_adapt(replay, AdaptStart::aggregator);
  }
  for (const char* file : {"base/model.ckpt", "aggregator/model.ckpt", "adapt/teacher.ckpt", "adapt/student.ckpt",
                           "adapt/trace.jsonl", "data/annotations.jsonl"})
    EXPECT_EQ(bytes_of(a.path / file), bytes_of(b.path / file)) << file;
  for (const auto& entry : fs::directory_iterator(a.path / "data" / "images"))
    ASSERT_EQ(bytes_of(entry.path()), bytes_of(b.path / "data" / "images" / entry.path().filename()));

  const json manifest = read_json(a.path / "adapt" / "manifest.json");
  EXPECT_EQ(manifest["stage"], "adapt");
  EXPECT_EQ(manifest["seed"], 3);
  EXPECT_EQ(manifest["code_version"], code_version());
  EXPECT_EQ(manifest["config"], tree);
}

TEST(Pipeline, EvalFitAndMeanTeacherBaseline) {
  TempRoot root("misc");
  json tree = tiny_tree(root.path);
  run_synth_gen(tree);
  run_train_base(tree);
  const auto mt = run_adapt(tree, AdaptStart::base, "mt");
  EXPECT_TRUE(mt.metrics["transforms"].empty());
  EXPECT_TRUE(fs::exists(root.path / "mt" / "teacher.ckpt"));

  const auto ev = run_eval(tree, root.path / "base" / "model.ckpt", "source_val");
  EXPECT_TRUE(ev.metrics.contains("mean_ap50"));
  EXPECT_EQ(ev.metrics["split"], "source_val");
  EXPECT_EQ(code_of([&] { run_eval(tree, root.path / "base" / "model.ckpt", "target_train"); }), Errc::configuration);

  tree["fit"]["n"] = 2;
  tree["fit"]["grid"] = {8, 8};
  const auto fit = run_fit_approx(tree, true);
  EXPECT_EQ(fit.metrics["set"].size(), 2u);
  EXPECT_EQ(fit.metrics["selection"].size(), 64u);
  EXPECT_TRUE(fs::exists(root.path / "fit" / "remap.png"));
}

TEST(Pipeline, SweepOverNWritesSummaryAndPlot) {
  TempRoot root("sweep");
  json tree = tiny_tree(root.path);
  tree["sweep"] = {{"param", "N"}, {"values", {1, 2}}, {"seeds", {1, 2}}};
  const auto r = run_sweep(tree);
  ASSERT_EQ(r.metrics["rows"].size(), 2u);
  for (const auto& row : r.metrics["rows"]) EXPECT_EQ(row["runs"].size(), 2u);
  EXPECT_TRUE(fs::exists(root.path / "sweep" / "summary.txt"));
  EXPECT_TRUE(fs::exists(root.path / "sweep" / "ap_vs_N.png"));
  EXPECT_TRUE(fs::exists(root.path / "sweep" / "seed_2" / "aggregator_N2" / "model.ckpt"));

  // A second run reuses every finished stage and reports the same numbers.
  const auto again = run_sweep(tree);
  EXPECT_EQ(again.metrics, r.metrics);
}

TEST(Pipeline, TracePlotsOneImagePerParameter) {
  TempRoot root("plot");
  const json tree = tiny_tree(root.path);
  run_synth_gen(tree);
  run_train_base(tree);
  run_train_aggregator(tree);
  run_adapt(tree, AdaptStart::aggregator);
  const auto files = plot_trace(root.path / "adapt" / "trace.jsonl", root.path / "plots");
  for (const char* name : {"losses.png", "target_ap.png", "T_sx.png", "T_sy.png", "T_lx.png", "T_ly.png"})
    EXPECT_TRUE(fs::exists(root.path / "plots" / name)) << name;
  EXPECT_EQ(files.size(), 6u);
}
