#include "geoshift/mapping.hpp"

#include <cmath>
#include <numbers>

#include "geoshift/error.hpp"

namespace geoshift {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

void check_fov(double deg, const char* what) {
  if (!(deg > 0.0 && deg < 180.0)) throw Error(Errc::invalid_parameter, std::string(what) + " must lie in (0, 180) degrees");
}

}  // namespace

DenseMapping spherical_fov_mapping(FieldOfView src, FieldOfView dst) {
  check_fov(src.x_deg, "source FoV x");
  check_fov(src.y_deg, "source FoV y");
  check_fov(dst.x_deg, "destination FoV x");
  check_fov(dst.y_deg, "destination FoV y");
  const double tsx = std::tan(radians(src.x_deg) / 2), tsy = std::tan(radians(src.y_deg) / 2);
  const double hdx = radians(dst.x_deg) / 2, hdy = radians(dst.y_deg) / 2;
  DenseMapping m;
  m.name = "spherical_fov";
  m.parameters = {{"src_fov_x", src.x_deg}, {"src_fov_y", src.y_deg}, {"dst_fov_x", dst.x_deg}, {"dst_fov_y", dst.y_deg}};
  m.forward = [=](Point2 q) { return Point2{std::atan(q.x * tsx) / hdx, std::atan(q.y * tsy) / hdy}; };
  m.inverse = [=](Point2 q) { return Point2{std::tan(q.x * hdx) / tsx, std::tan(q.y * hdy) / tsy}; };
  return m;
}

double horizontal_compression(const DenseMapping& mapping, double x) {
  const double y = mapping(Point2{x, 0.0}).x;
  return std::abs(x) / std::abs(y);
}

DenseMapping viewpoint_tilt_mapping(double pitch_deg, double zoom, FieldOfView fov) {
  check_fov(fov.x_deg, "FoV x");
  check_fov(fov.y_deg, "FoV y");
  if (!(std::abs(pitch_deg) < 60.0)) throw Error(Errc::invalid_parameter, "pitch must lie in (-60, 60) degrees");
  if (!(zoom > 0.0) || !std::isfinite(zoom)) throw Error(Errc::invalid_parameter, "zoom must be positive");
  const double tx = std::tan(radians(fov.x_deg) / 2), ty = std::tan(radians(fov.y_deg) / 2);
  const double c = std::cos(radians(pitch_deg)), s = std::sin(radians(pitch_deg));
  DenseMapping m;
  m.name = "viewpoint_tilt";
  m.parameters = {{"pitch_deg", pitch_deg}, {"zoom", zoom}, {"fov_x", fov.x_deg}, {"fov_y", fov.y_deg}};
  // View ray (X, Y, 1) of the tilted camera, rotated into the scene frame
  // and intersected with the scene plane z = 1.
  m.inverse = [=](Point2 q) {
    const double x = q.x * tx * zoom, y = q.y * ty * zoom;
    const double ry = c * y + s, rz = -s * y + c;
    return Point2{x / rz / tx, ry / rz / ty};
  };
  m.forward = [=](Point2 p) {
    const double x = p.x * tx, y = p.y * ty;
    const double ry = c * y - s, rz = s * y + c;
    return Point2{x / rz / (tx * zoom), ry / rz / (ty * zoom)};
  };
  return m;
}

DenseMapping identity_mapping() {
  DenseMapping m;
  m.name = "identity";
  m.forward = [](Point2 q) { return q; };
  m.inverse = [](Point2 q) { return q; };
  return m;
}

DenseMapping homography_mapping(const HomographyParams& p) {
  validate(p);
  const HomographyParams inv = invert(p);
  DenseMapping m;
  m.name = "homography";
  m.parameters = {{"sx", p.sx}, {"sy", p.sy}, {"lx", p.lx}, {"ly", p.ly}};
  m.forward = [p](Point2 q) { return apply_point(p, q); };
  m.inverse = [inv](Point2 q) { return apply_point(inv, q); };
  return m;
}

DenseMapping scale_mapping(double sx, double sy) {
  DenseMapping m = homography_mapping({sx, sy, 0.0, 0.0});
  m.name = "scale";
  return m;
}

}  // namespace geoshift
