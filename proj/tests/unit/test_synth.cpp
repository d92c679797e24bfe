#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "geoshift/synth.hpp"
#include "geoshift/training.hpp"
#include "support.hpp"

using namespace geoshift;
using namespace geoshift::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("geoshift_test_" + name);
  fs::remove_all(p);
  return p;
}

double mean_area(const std::vector<DomainSample>& s) {
  double a = 0.0;
  int n = 0;
  for (const auto& x : s)
    for (const auto& t : x.truth) {
      a += t.box.area();
      ++n;
    }
  return a / std::max(n, 1);
}

double mean_height(const std::vector<DomainSample>& s) {
  double a = 0.0;
  int n = 0;
  for (const auto& x : s)
    for (const auto& t : x.truth) {
      a += t.box.height();
      ++n;
    }
  return a / std::max(n, 1);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Synth, DeterministicFromSeed) {
  SceneSpec scene;
  scene.seed = 7;
  ShiftSpec shift;
  shift.kind = ShiftKind::fov;
  const SplitCounts counts{6, 3, 6, 3};
  const auto a = generate_domain_pair(scene, shift, counts);
  const auto b = generate_domain_pair(scene, shift, counts);
  ASSERT_EQ(a.target_val.size(), 3u);
  for (size_t i = 0; i < a.source_train.size(); ++i) EXPECT_EQ(a.source_train[i].image, b.source_train[i].image);
  for (size_t i = 0; i < a.target_val.size(); ++i) EXPECT_EQ(a.target_val[i].image, b.target_val[i].image);
  scene.seed = 8;
  const auto c = generate_domain_pair(scene, shift, counts);
  EXPECT_FALSE(a.source_train[0].image == c.source_train[0].image);
}

TEST(Synth, ArchivesAreByteIdentical) {
  SceneSpec scene;
  scene.seed = 3;
  ShiftSpec shift;
  shift.kind = ShiftKind::viewpoint;
  const SplitCounts counts{4, 2, 4, 2};
  const auto d1 = scratch("ds1"), d2 = scratch("ds2");
  write_dataset(generate_domain_pair(scene, shift, counts), d1);
  write_dataset(generate_domain_pair(scene, shift, counts), d2);
  for (const auto& e : fs::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), d1);
    EXPECT_EQ(slurp(e.path()), slurp(d2 / rel)) << rel;
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST(Synth, TruthBoxesTightlyBoundMasks) {
  SceneSpec scene;
  for (auto kind : {ShiftKind::none, ShiftKind::fov, ShiftKind::viewpoint}) {
    ShiftSpec shift;
    shift.kind = kind;
    const auto sampling = shift.sampling_mapping();
    for (uint64_t seed = 0; seed < 20; ++seed) {
      std::vector<int> mask;
      const auto s = render_sample(scene, sampling, 0.0, seed, &mask);
      const int n = scene.image_size;
      std::vector<Box> expected;
      for (int o = 0; o < 16; ++o) {
        int x0 = n, y0 = n, x1 = -1, y1 = -1, count = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            if (mask[i * n + j] == o) {
              x0 = std::min(x0, j);
              x1 = std::max(x1, j);
              y0 = std::min(y0, i);
              y1 = std::max(y1, i);
              ++count;
            }
        if (count >= scene.min_visible_pixels) expected.push_back({double(x0), double(y0), x1 + 1.0, y1 + 1.0});
      }
      ASSERT_EQ(s.truth.size(), expected.size());
      for (size_t k = 0; k < expected.size(); ++k) {
        const Box& b = s.truth[k].box;
        EXPECT_LE(std::abs(b.x_min - expected[k].x_min), 1.0);
        EXPECT_LE(std::abs(b.y_min - expected[k].y_min), 1.0);
        EXPECT_LE(std::abs(b.x_max - expected[k].x_max), 1.0);
        EXPECT_LE(std::abs(b.y_max - expected[k].y_max), 1.0);
        EXPECT_GE(b.x_min, 0.0);
        EXPECT_LE(b.x_max, n);
        EXPECT_GE(b.y_min, 0.0);
        EXPECT_LE(b.y_max, n);
      }
    }
  }
}

TEST(Synth, TargetTrainIsUnlabeledInMemoryAndOnDisk) {
  SceneSpec scene;
  ShiftSpec shift;
  shift.kind = ShiftKind::fov;
  const auto ds = generate_domain_pair(scene, shift, {5, 2, 5, 2});
  for (const auto& s : ds.target_train) EXPECT_FALSE(s.annotations.has_value());
  for (const auto& s : ds.target_val) EXPECT_TRUE(s.annotations.has_value());
  for (const auto& s : ds.source_train) EXPECT_TRUE(s.annotations.has_value());

  const auto dir = scratch("unlabeled");
  write_dataset(ds, dir);
  std::ifstream ann(dir / "annotations.jsonl");
  std::string line;
  int target_train = 0, lines = 0;
  while (std::getline(ann, line)) {
    const auto rec = nlohmann::json::parse(line);
    ++lines;
    if (rec["domain"] == "target" && rec["split"] == "train") {
      ++target_train;
      EXPECT_FALSE(rec.contains("boxes"));
      EXPECT_FALSE(rec.contains("classes"));
    } else {
      EXPECT_TRUE(rec.contains("boxes"));
    }
  }
  EXPECT_EQ(lines, 14);
  EXPECT_EQ(target_train, 5);

  const auto back = read_dataset(dir);
  ASSERT_EQ(back.source_train.size(), 5u);
  ASSERT_EQ(back.target_val.size(), 2u);
  EXPECT_EQ(back.source_train[1].image, ds.source_train[1].image);
  EXPECT_EQ(back.source_val[0].annotations->size(), ds.source_val[0].annotations->size());
  for (const auto& s : back.target_train) EXPECT_FALSE(s.annotations.has_value());
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest["seed"], scene.seed);
  EXPECT_EQ(manifest["shift"]["kind"], "fov");
  fs::remove_all(dir);
}

TEST(Synth, MissingDatasetIsDependencyError) {
  EXPECT_EQ(code_of([] { read_dataset(scratch("missing")); }), Errc::dependency);
}

TEST(Synth, FovShiftShrinksBoxes) {
  SceneSpec scene;
  scene.seed = 1;
  ShiftSpec shift;
  shift.kind = ShiftKind::fov;
  const auto ds = generate_domain_pair(scene, shift, {0, 100, 0, 100});
  EXPECT_LT(mean_area(ds.target_val), mean_area(ds.source_val));
}

TEST(Synth, ViewpointShiftChangesBoxHeights) {
  SceneSpec scene;
  scene.seed = 1;
  ShiftSpec shift;
  shift.kind = ShiftKind::viewpoint;
  const auto ds = generate_domain_pair(scene, shift, {0, 100, 0, 100});
  const double src = mean_height(ds.source_val), tgt = mean_height(ds.target_val);
  EXPECT_GT(std::abs(src - tgt) / src, 0.1) << src << " vs " << tgt;
}

TEST(Synth, NullShiftGivesMatchingDetectorAp) {
  SceneSpec scene;
  scene.seed = 5;
  ShiftSpec shift;  // none
  const auto ds = generate_domain_pair(scene, shift, {300, 400, 0, 400});
  BaseTrainConfig cfg;
  cfg.steps = 400;
  auto base = train_base(ds.source_train, {}, DetectorConfig{}, cfg, 5);
  const double src = evaluate(base.model, ds.source_val).mean_ap50;
  const double tgt = evaluate(base.model, ds.target_val).mean_ap50;
  EXPECT_GT(src, 0.1);
  EXPECT_LT(std::abs(src - tgt), 0.03) << src << " vs " << tgt;
}

TEST(Synth, SpecValidation) {
  SceneSpec scene;
  scene.min_objects = 0;
  EXPECT_EQ(code_of([&] { scene.validate(); }), Errc::configuration);
  ShiftSpec shift;
  shift.kind = ShiftKind::fov;
  shift.dst_fov = {200, 30};
  EXPECT_EQ(code_of([&] { shift.validate(); }), Errc::invalid_parameter);
  EXPECT_EQ(code_of([] { shift_kind_from_string("sideways"); }), Errc::schema);
}
