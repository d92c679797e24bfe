#include <gtest/gtest.h>

#include <cmath>

#include "geoshift/approx.hpp"
#include "geoshift/mapping.hpp"
#include "support.hpp"

using namespace geoshift;
using namespace geoshift::testing;

namespace {

// Sign-preserving smooth field: each output coordinate is the input
// coordinate times a strictly positive smooth factor.
DenseMapping random_smooth_mapping(std::mt19937_64& rng) {
  const double a = uniform(rng, 0.6, 1.4), b = uniform(rng, -0.3, 0.3), c = uniform(rng, -0.2, 0.2);
  const double d = uniform(rng, 0.6, 1.4), e = uniform(rng, -0.3, 0.3), f = uniform(rng, -0.2, 0.2);
  DenseMapping m;
  m.name = "random_smooth";
  m.forward = [=](Point2 q) {
    return Point2{q.x * (a + b * q.x * q.x + c * std::sin(2 * q.y)), q.y * (d + e * q.y * q.y + f * std::cos(3 * q.x))};
  };
  return m;
}

const DenseMapping& fov_mapping() {
  static const DenseMapping m = spherical_fov_mapping({50, 26}, {90, 34});
  return m;
}

}  // namespace

TEST(Grid, CellCentersAvoidAxes) {
  for (const auto& p : Grid{8, 8}.points()) {
    EXPECT_NE(p.x, 0.0);
    EXPECT_NE(p.y, 0.0);
  }
  EXPECT_EQ(Grid({4, 6}).points().size(), 24u);
}

TEST(SphericalMapping, FixesOriginAndIsOdd) {
  const auto& m = fov_mapping();
  const Point2 o = m({0, 0});
  EXPECT_EQ(o.x, 0.0);
  EXPECT_EQ(o.y, 0.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Point2 q{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const Point2 a = m(q), b = m({-q.x, q.y}), c = m({q.x, -q.y});
    EXPECT_NEAR(a.x, -b.x, 1e-15);
    EXPECT_NEAR(a.y, b.y, 1e-15);
    EXPECT_NEAR(a.y, -c.y, 1e-15);
  }
}

TEST(SphericalMapping, CompressionGrowsTowardThePeriphery) {
  const auto& m = fov_mapping();
  EXPECT_GT(horizontal_compression(m, 0.9), horizontal_compression(m, 0.1));
  double prev = 0.0;
  for (double x = 0.05; x <= 1.0; x += 0.05) {
    const double r = horizontal_compression(m, x);
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(SphericalMapping, InverseRoundTripAndRange) {
  const auto& m = fov_mapping();
  ASSERT_TRUE(m.invertible());
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Point2 q{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const Point2 r = m(m.inverse(q));
    EXPECT_NEAR(r.x, q.x, 1e-12);
    EXPECT_NEAR(r.y, q.y, 1e-12);
  }
  EXPECT_EQ(code_of([] { spherical_fov_mapping({0, 20}, {90, 34}); }), Errc::invalid_parameter);
  EXPECT_EQ(code_of([] { spherical_fov_mapping({50, 26}, {180, 34}); }), Errc::invalid_parameter);
}

TEST(ViewpointMapping, InverseRoundTrip) {
  const auto m = viewpoint_tilt_mapping(25, 1.5, {50, 26});
  std::mt19937_64 rng(3);
  for (int i = 0; i < 100; ++i) {
    const Point2 q{uniform(rng, -1, 1), uniform(rng, -1, 1)};
    const Point2 r = m(m.inverse(q));
    EXPECT_NEAR(r.x, q.x, 1e-12);
    EXPECT_NEAR(r.y, q.y, 1e-12);
  }
  EXPECT_EQ(code_of([] { viewpoint_tilt_mapping(75, 1.0, {50, 26}); }), Errc::invalid_parameter);
}

TEST(PixelwiseEmulation, IdentityAndScale) {
  const auto id = pixelwise_emulation(identity_mapping(), {4, 4});
  ASSERT_EQ(id.size(), 16u);
  for (const auto& p : id) {
    EXPECT_NEAR(p.sx, 1.0, 1e-15);
    EXPECT_NEAR(p.sy, 1.0, 1e-15);
    EXPECT_EQ(p.lx, 0.0);
    EXPECT_EQ(p.ly, 0.0);
  }
  for (const auto& p : pixelwise_emulation(scale_mapping(0.5, 0.5), {8, 8}))
    EXPECT_EQ(p, (HomographyParams{0.5, 0.5, 0, 0}));
}

// Solving then re-applying a point map costs a few ulps; nothing else.
constexpr double kNodeTolerancePx = 1e-9;

TEST(PixelwiseEmulation, ExactAtGridNodes) {
  const Grid grid{8, 8};
  SelectionMap trivial{8, 8, {}};
  for (int k = 0; k < 64; ++k) trivial.index.push_back(k);

  const auto sph = pixelwise_emulation(fov_mapping(), grid);
  ASSERT_EQ(sph.size(), 64u);
  const auto e = remap_error(sph, trivial, fov_mapping(), grid, 256);
  EXPECT_LE(e.max_error, kNodeTolerancePx);

  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto m = random_smooth_mapping(rng);
    const auto set = pixelwise_emulation(m, grid);
    const auto r = remap_error(set, trivial, m, grid, 256);
    EXPECT_LE(r.max_error, kNodeTolerancePx);
  }
}

TEST(PixelwiseEmulation, ReportsOffendingCell) {
  try {
    pixelwise_emulation(identity_mapping(), {3, 3});  // center cell sits on both axes
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unmappable_point);
    EXPECT_NE(std::string(e.what()).find("cell"), std::string::npos);
  }
  DenseMapping flip = identity_mapping();
  flip.forward = [](Point2 q) { return Point2{-q.x, q.y}; };
  EXPECT_EQ(code_of([&] { pixelwise_emulation(flip, {2, 2}); }), Errc::sign_degenerate);
}

TEST(RemapError, ScaleMappingAgainstClosedForm) {
  // identity vs (x, y) -> (x / 2, y / 2): per-cell error |q| / 2 in frame
  // units, i.e. 64 |q| px at 256 px. The mean of x^2 over g centers is
  // (g^2 - 1) / (3 g^2).
  for (int g : {2, 8, 64}) {
    const Grid grid{g, g};
    SelectionMap sel{g, g, std::vector<int>(static_cast<size_t>(g) * g, 0)};
    const auto e = remap_error({HomographyParams::identity()}, sel, scale_mapping(0.5, 0.5), grid, 256);
    const double mean_sq = 2.0 * (g * g - 1.0) / (3.0 * g * g);
    EXPECT_NEAR(e.rmse, 64.0 * std::sqrt(mean_sq), 1e-9);
    const double corner = 1.0 - 1.0 / g;
    EXPECT_NEAR(e.max_error, 64.0 * std::sqrt(2.0) * corner, 1e-9);
  }
  const Grid grid{4, 4};
  SelectionMap sel{4, 4, std::vector<int>(16, 0)};
  const auto zero = remap_error({HomographyParams::identity()}, sel, identity_mapping(), grid, 256);
  EXPECT_EQ(zero.rmse, 0.0);
  EXPECT_EQ(zero.max_error, 0.0);
}

TEST(SelectBest, TiesGoToLowestIndex) {
  const HomographySet set(3, HomographyParams::identity());
  const auto sel = select_best(set, identity_mapping(), {4, 4});
  for (int i : sel.index) EXPECT_EQ(i, 0);
}

TEST(Fit, ExactFamilyMemberAndIdentity) {
  const HomographyParams h{1.3, 0.8, 0.1, 0};
  const auto r = fit_homography_set(homography_mapping(h), 1, {16, 16});
  EXPECT_LT(r.rmse, 1e-3);
  EXPECT_LE(r.rmse, r.max_error);
  for (int n : {1, 3}) EXPECT_LT(fit_homography_set(identity_mapping(), n, {16, 16}).rmse, 1e-3);
  EXPECT_EQ(code_of([] { fit_homography_set(identity_mapping(), 0, {4, 4}); }), Errc::invalid_parameter);
}

TEST(Fit, FiveHomographiesApproximateSphericalMapping) {
  const Grid grid{64, 64};
  const auto one = fit_homography_set(fov_mapping(), 1, grid);
  const auto five = fit_homography_set(fov_mapping(), 5, grid);
  EXPECT_LE(five.rmse, 0.5);
  EXPECT_LE(five.rmse, 0.5 * one.rmse);
  EXPECT_EQ(five.set.size(), 5u);
  EXPECT_EQ(five.selection.index.size(), 64u * 64u);
}

TEST(Fit, NestedFitsAreMonotone) {
  const Grid grid{32, 32};
  auto prev = fit_homography_set(fov_mapping(), 1, grid);
  for (int n = 2; n <= 5; ++n) {
    HomographySet init = prev.set;
    init.push_back(HomographyParams::identity());
    const auto next = fit_homography_set(fov_mapping(), n, grid, {}, init);
    EXPECT_LE(next.rmse, prev.rmse + 1e-9) << "n=" << n;
    prev = next;
  }
}

TEST(Fit, SelectionIsCellwiseOptimal) {
  const Grid grid{24, 24};
  const auto r = fit_homography_set(fov_mapping(), 4, grid);
  const auto pts = grid.points();
  for (size_t k = 0; k < pts.size(); ++k) {
    const Point2 target = fov_mapping()(pts[k]);
    auto err = [&](int i) {
      const Point2 a = apply_point(r.set[i], pts[k]);
      return std::hypot(a.x - target.x, a.y - target.y);
    };
    const double chosen = err(r.selection.index[k]);
    for (int i = 0; i < 4; ++i) EXPECT_LE(chosen, err(i) + 1e-15);
  }
}
