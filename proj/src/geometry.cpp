#include "geoshift/geometry.hpp"

#include <cmath>
#include <sstream>

#include "geoshift/error.hpp"

namespace geoshift {

bool HomographyParams::is_valid() const {
  return std::isfinite(sx) && std::isfinite(sy) && std::isfinite(lx) && std::isfinite(ly) && sx > 0.0 && sy > 0.0;
}

void validate(const HomographyParams& p) {
  if (!p.is_valid()) {
    std::ostringstream os;
    os << "homography (" << p.sx << ", " << p.sy << ", " << p.lx << ", " << p.ly
       << ") needs finite values and positive scales";
    throw Error(Errc::invalid_parameter, os.str());
  }
}

Matrix3 Matrix3::identity() {
  Matrix3 r;
  r(0, 0) = r(1, 1) = r(2, 2) = 1.0;
  return r;
}

Matrix3 Matrix3::operator*(const Matrix3& rhs) const {
  Matrix3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += (*this)(i, k) * rhs(k, j);
      r(i, j) = acc;
    }
  return r;
}

double Matrix3::determinant() const {
  const Matrix3& a = *this;
  return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) - a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
         a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
}

Matrix3 to_matrix(const HomographyParams& p) {
  validate(p);
  Matrix3 h;
  h(0, 0) = p.sx;
  h(1, 1) = p.sy;
  h(2, 0) = p.lx;
  h(2, 1) = p.ly;
  h(2, 2) = 1.0;
  return h;
}

Point2 apply_point(const HomographyParams& p, Point2 q) {
  const double w = p.lx * q.x + p.ly * q.y + 1.0;
  if (!(std::abs(w) > kProjectiveEps)) {
    std::ostringstream os;
    os << "point (" << q.x << ", " << q.y << ") maps to infinity (w = " << w << ")";
    throw Error(Errc::degenerate_point, os.str());
  }
  return {p.sx * q.x / w, p.sy * q.y / w};
}

HomographyParams solve_point_mapping(Point2 p, Point2 d) {
  if (!(std::abs(p.x) > kProjectiveEps) || !(std::abs(p.y) > kProjectiveEps)) {
    std::ostringstream os;
    os << "point (" << p.x << ", " << p.y << ") lies on a coordinate axis";
    throw Error(Errc::unmappable_point, os.str());
  }
  const HomographyParams r{d.x / p.x, d.y / p.y, 0.0, 0.0};
  if (!(r.sx > 0.0) || !(r.sy > 0.0)) {
    std::ostringstream os;
    os << "mapping (" << p.x << ", " << p.y << ") -> (" << d.x << ", " << d.y
       << ") needs a non-positive scale";
    throw Error(Errc::sign_degenerate, os.str());
  }
  return r;
}

HomographyParams invert(const HomographyParams& p) {
  validate(p);
  return {1.0 / p.sx, 1.0 / p.sy, -p.lx / p.sx, -p.ly / p.sy};
}

std::array<double, 4> invert_vjp(const HomographyParams& p, const std::array<double, 4>& g) {
  const double isx = 1.0 / p.sx;
  const double isy = 1.0 / p.sy;
  return {
      -g[0] * isx * isx + g[2] * p.lx * isx * isx,
      -g[1] * isy * isy + g[3] * p.ly * isy * isy,
      -g[2] * isx,
      -g[3] * isy,
  };
}

HomographyParams compose(const HomographyParams& a, const HomographyParams& b) {
  validate(a);
  validate(b);
  return {a.sx * b.sx, a.sy * b.sy, a.lx * b.sx + b.lx, a.ly * b.sy + b.ly};
}

}  // namespace geoshift
