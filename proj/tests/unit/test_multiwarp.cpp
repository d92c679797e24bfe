#include <gtest/gtest.h>

#include "geoshift/model.hpp"
#include "geoshift/multiwarp.hpp"
#include "support.hpp"

using namespace geoshift;
using namespace geoshift::testing;

namespace {

FeatureStack stack_of(std::vector<Tensor> maps, std::vector<std::vector<uint8_t>> valid) {
  FeatureStack s;
  s.maps = std::move(maps);
  s.valid = std::move(valid);
  return s;
}

DetectorConfig small_config(int image = 32) {
  DetectorConfig c;
  c.backbone.widths = {8, 8, 8, 8};
  c.image_size = image;
  return c;
}

// Every conv becomes a positive box filter and every batch norm the
// identity, so features are a blurred copy of image intensity.
void make_blur_backbone(GeoDetector& m) {
  m.backbone.visit([](const std::string& name, Tensor& v, Tensor*) {
    if (name.ends_with("weight")) v.fill(1.0 / (v.c() * v.h() * v.w()));
    else if (name.ends_with("bias") || name.ends_with("beta") || name.ends_with("running_mean")) v.fill(0.0);
    else v.fill(1.0);
  });
}

}  // namespace

TEST(Reducers, IdenticalMapsReduceToTheMap) {
  std::mt19937_64 rng(1);
  const Tensor m = random_tensor(2, 3, 4, 4, rng);
  const std::vector<uint8_t> all(16, 1);
  for (auto kind : {ReducerKind::mean, ReducerKind::max}) {
    const Tensor r = reduce_stack(stack_of({m, m, m}, {all, all, all}), kind);
    for (size_t k = 0; k < m.size(); ++k) EXPECT_NEAR(r.data()[k], m.data()[k], 1e-15);
  }
}

TEST(Reducers, MeanOfZeroAndTwoIsOne) {
  const std::vector<uint8_t> all(4, 1);
  const Tensor r = reduce_stack(stack_of({Tensor(1, 1, 2, 2, 0.0), Tensor(1, 1, 2, 2, 2.0)}, {all, all}),
                                ReducerKind::mean);
  for (double v : r.values()) EXPECT_EQ(v, 1.0);
}

TEST(Reducers, MaxWithDisjointValidity) {
  Tensor a(1, 1, 2, 2), b(1, 1, 2, 2);
  a.data()[0] = -3.0;  // valid only in a
  a.data()[1] = 9.0;   // invalid in a
  b.data()[1] = -1.0;  // valid only in b
  b.data()[0] = 7.0;   // invalid in b
  const Tensor r = reduce_stack(stack_of({a, b}, {{1, 0, 0, 0}, {0, 1, 0, 0}}), ReducerKind::max);
  EXPECT_EQ(r.data()[0], -3.0);
  EXPECT_EQ(r.data()[1], -1.0);
  EXPECT_EQ(r.data()[2], 0.0);  // invalid everywhere
  EXPECT_EQ(r.data()[3], 0.0);
}

TEST(Reducers, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(2);
  for (auto kind : {ReducerKind::mean, ReducerKind::max}) {
    auto s = stack_of({random_tensor(1, 2, 3, 3, rng), random_tensor(1, 2, 3, 3, rng), random_tensor(1, 2, 3, 3, rng)},
                      {{1, 1, 1, 0, 1, 0, 1, 1, 0}, {1, 0, 1, 1, 1, 0, 0, 1, 1}, {1, 1, 0, 1, 0, 0, 1, 1, 1}});
    const Tensor w = random_tensor(1, 2, 3, 3, rng);
    const auto g = reduce_stack_backward(s, kind, w);
    for (int i = 0; i < 3; ++i)
      for (size_t k = 0; k < s.maps[i].size(); ++k) {
        const double saved = s.maps[i].data()[k];
        s.maps[i].data()[k] = saved + 1e-7;
        const double up = dot(reduce_stack(s, kind), w);
        s.maps[i].data()[k] = saved - 1e-7;
        const double down = dot(reduce_stack(s, kind), w);
        s.maps[i].data()[k] = saved;
        EXPECT_NEAR(g[i].data()[k], (up - down) / 2e-7, 1e-6);
      }
  }
}

TEST(MultiWarp, IdentitySetWithMeanEqualsPlainFeatures) {
  std::mt19937_64 rng(3);
  GeoDetector m(small_config(), 11);
  const Tensor img = random_tensor(2, 3, 32, 32, rng, 0, 1);
  const Tensor plain = m.features(img, {});
  m.attach_transforms(HomographySet(5, HomographyParams::identity()), AggregatorKind::mean, 0);
  const Tensor fused = m.features(img, {});
  ASSERT_TRUE(fused.same_shape(plain));
  for (size_t k = 0; k < plain.size(); ++k) EXPECT_NEAR(fused.data()[k], plain.data()[k], 1e-4);
}

TEST(MultiWarp, OutputExtentIndependentOfN) {
  std::mt19937_64 rng(4);
  GeoDetector m(small_config(), 12);
  const Tensor img = random_tensor(1, 3, 32, 32, rng, 0, 1);
  for (int n = 1; n <= 9; ++n) {
    HomographySet set;
    for (int i = 0; i < n; ++i)
      set.push_back({uniform(rng, 0.5, 2), uniform(rng, 0.5, 2), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)});
    m.attach_transforms(set, AggregatorKind::learned, n);
    const Tensor f = m.features(img, {});
    EXPECT_EQ(f.c(), 8);
    EXPECT_EQ(f.h(), 32 / m.layout().stride);
    EXPECT_EQ(f.w(), 32 / m.layout().stride);
  }
}

TEST(MultiWarp, LearnedShapeContractAtFullResolution) {
  DetectorConfig c;
  c.backbone.widths = {16, 32, 64, 64};
  c.backbone.strides = {2, 1, 2, 2};
  c.image_size = 256;
  GeoDetector m(c, 5);
  m.attach_transforms({HomographyParams{1.2, 0.9, 0.1, 0}}, AggregatorKind::learned, 1);
  const Tensor f = m.features(Tensor(1, 3, 256, 256, 0.5), {});
  EXPECT_EQ(f.c(), 64);
  EXPECT_EQ(f.h(), 32);
  EXPECT_EQ(f.w(), 32);
}

TEST(MultiWarp, AggregatorCountMismatchIsConfigurationError) {
  GeoDetector m(small_config(), 13);
  m.attach_transforms(HomographySet(3, HomographyParams::identity()), AggregatorKind::learned, 0);
  m.transforms.pop_back();
  EXPECT_EQ(code_of([&] { m.features(Tensor(1, 3, 32, 32), {}); }), Errc::configuration);
  std::mt19937_64 rng(0);
  Aggregator agg(8, 3, rng);
  EXPECT_EQ(code_of([&] { agg.forward(Tensor(1, 16, 4, 4), nn::Mode::eval); }), Errc::configuration);
  EXPECT_EQ(code_of([&] { m.attach_transforms(HomographySet(2), AggregatorKind::none, 0); }), Errc::configuration);
}

TEST(MultiWarp, TransformGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(5);
  DetectorConfig c = small_config(64);
  GeoDetector m(c, 14);
  const HomographySet set{{1.3, 0.8, 0.2, -0.1}, {0.7, 1.1, -0.3, 0.25}, {1.6, 1.5, 0.05, 0.3}};
  m.attach_transforms(set, AggregatorKind::learned, 2);
  const Tensor img = smooth_image(1, 3, 64, 64, rng);
  const Tensor out = m.forward(img, {});
  const Tensor w = random_tensor(out.n(), out.c(), out.h(), out.w(), rng);
  m.zero_grad();
  m.backward(w, {.transforms = true});
  const auto analytic = m.transform_grad;
  int checked = 0, within = 0, skipped = 0;
  double worst = 0.0;
  for (size_t i = 0; i < set.size(); ++i)
    for (int t = 0; t < 4; ++t) {
      const double h = 1e-6;
      auto hi = set, lo = set;
      auto a = hi[i].to_array();
      a[t] += h;
      hi[i] = HomographyParams::from_array(a);
      a[t] -= 2 * h;
      lo[i] = HomographyParams::from_array(a);
      // A validity flip inside the stencil is a jump, not a slope.
      const int fh = out.h(), fw = out.w();
      if (WarpPlan(hi[i], 64, 64).valid() != WarpPlan(lo[i], 64, 64).valid() ||
          WarpPlan(invert(hi[i]), fh, fw).valid() != WarpPlan(invert(lo[i]), fh, fw).valid()) {
        ++skipped;
        continue;
      }
      m.transforms = hi;
      const double up = dot(m.forward(img, {}), w);
      m.transforms = lo;
      const double down = dot(m.forward(img, {}), w);
      const double fd = (up - down) / (2 * h);
      const double rel = relative_error(analytic[i][t], fd, 1e-6);
      worst = std::max(worst, rel);
      ++checked;
      within += rel <= 1e-3;
    }
  m.transforms = set;
  EXPECT_EQ(within, checked) << "worst relative error " << worst;
  EXPECT_GE(checked, 8) << skipped << " stencils straddled a validity flip";
}

TEST(MultiWarp, UnwarpedResponsePeaksAtTheInputLandmark) {
  GeoDetector m(small_config(64), 15);
  make_blur_backbone(m);
  // Bright blob centred on pixel (40, 20) of a 64 x 64 image.
  Tensor img(1, 3, 64, 64);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) img.at(0, c, y, x) = std::exp(-((x - 40.5) * (x - 40.5) + (y - 20.5) * (y - 20.5)) / 8.0);
  const HomographySet set{{1.5, 1.2, 0.2, -0.1}, {0.8, 0.9, -0.3, 0.2}, {1.1, 1.7, 0.0, 0.3}};
  m.attach_transforms(set, AggregatorKind::mean, 0);
  MultiWarp mw;
  const FeatureStack stack = mw.forward(img, set, m.backbone, nn::Mode::eval);
  for (int i = 0; i < stack.size(); ++i) {
    const Tensor& f = stack.maps[i];
    int bi = 0, bj = 0;
    for (int y = 0; y < f.h(); ++y)
      for (int x = 0; x < f.w(); ++x)
        if (f.at(0, 0, y, x) > f.at(0, 0, bi, bj)) {
          bi = y;
          bj = x;
        }
    const int stride = m.layout().stride;
    EXPECT_LE(std::abs(bi - 20 / stride), 1) << "branch " << i;
    EXPECT_LE(std::abs(bj - 40 / stride), 1) << "branch " << i;
  }
}
