#pragma once

#include <functional>
#include <map>
#include <string>

#include "geoshift/geometry.hpp"

namespace geoshift {

/// A deterministic point-to-point map of the normalized frame, optionally
/// invertible. Synthetic domain shifts render target pixels by sampling the
/// scene at inverse(q).
struct DenseMapping {
  std::string name;
  std::map<std::string, double> parameters;
  std::function<Point2(Point2)> forward;
  std::function<Point2(Point2)> inverse;  // may be empty

  Point2 operator()(Point2 q) const { return forward(q); }
  bool invertible() const { return static_cast<bool>(inverse); }
};

struct FieldOfView {
  double x_deg = 0.0;
  double y_deg = 0.0;
};

/// Projects a pinhole image with field of view `src` onto a spherical
/// (angle-proportional) image spanning `dst`: a point at pinhole coordinate
/// x lies on the ray of angle atan(x tan(src_x / 2)), which lands at
/// normalized coordinate angle / (dst_x / 2); y likewise. The inverse is
/// x = tan(x' dst_x / 2) / tan(src_x / 2). Odd in each coordinate, fixes
/// the origin, and squeezes the periphery more than the center.
/// Throws Errc::invalid_parameter unless every angle is in (0, 180).
DenseMapping spherical_fov_mapping(FieldOfView src, FieldOfView dst);

/// Ratio |x| / |mapping(x)| along the horizontal axis: how many source
/// units fold into one output unit near x.
double horizontal_compression(const DenseMapping& mapping, double x);

/// Camera pitched by `pitch_deg` (positive looks down) observing the
/// fronto-parallel scene plane, with an extra focal `zoom` (> 1 shrinks the
/// scene). Forward maps scene (source pinhole) coordinates to the tilted
/// view; inverse maps the tilted view back onto the scene.
DenseMapping viewpoint_tilt_mapping(double pitch_deg, double zoom, FieldOfView fov);

DenseMapping identity_mapping();
DenseMapping homography_mapping(const HomographyParams& p);
DenseMapping scale_mapping(double sx, double sy);

}  // namespace geoshift
