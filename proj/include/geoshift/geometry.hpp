#pragma once

#include <array>
#include <span>
#include <vector>

namespace geoshift {

/// Denominator cutoff for projective division.
inline constexpr double kProjectiveEps = 1e-8;

/// Point in the normalized image frame: the image spans [-1, 1]^2 with the
/// origin at the image center, x to the right and y downward.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// The four degrees of freedom of one homography
///
///     | sx  0  0 |
///     |  0 sy  0 |
///     | lx ly  1 |
///
/// Scales must stay positive; the determinant is sx * sy.
struct HomographyParams {
  double sx = 1.0;
  double sy = 1.0;
  double lx = 0.0;
  double ly = 0.0;

  static constexpr HomographyParams identity() { return {}; }

  std::array<double, 4> to_array() const { return {sx, sy, lx, ly}; }
  static HomographyParams from_array(std::span<const double, 4> v) { return {v[0], v[1], v[2], v[3]}; }

  bool is_valid() const;

  friend bool operator==(const HomographyParams&, const HomographyParams&) = default;
};

using HomographySet = std::vector<HomographyParams>;

struct Matrix3 {
  std::array<double, 9> m{};  // row-major

  double& operator()(int r, int c) { return m[static_cast<size_t>(r * 3 + c)]; }
  double operator()(int r, int c) const { return m[static_cast<size_t>(r * 3 + c)]; }

  static Matrix3 identity();
  Matrix3 operator*(const Matrix3& rhs) const;
  double determinant() const;
};

/// Throws Errc::invalid_parameter unless all values are finite and both
/// scales positive.
void validate(const HomographyParams& p);

Matrix3 to_matrix(const HomographyParams& p);

/// d = H * (q, 1) followed by projective division. Throws
/// Errc::degenerate_point when |w| <= kProjectiveEps.
Point2 apply_point(const HomographyParams& p, Point2 q);

/// Parameters (d.x / p.x, d.y / p.y, 0, 0) sending p onto d.
/// Throws Errc::unmappable_point if p touches an axis and
/// Errc::sign_degenerate if a negative scale would be required.
HomographyParams solve_point_mapping(Point2 p, Point2 d);

HomographyParams invert(const HomographyParams& p);

/// Vector-Jacobian product of invert(): given dL/d(invert(p)), returns dL/dp.
std::array<double, 4> invert_vjp(const HomographyParams& p, const std::array<double, 4>& grad_inverse);

/// Parameters of to_matrix(a) * to_matrix(b), i.e. b applied first.
HomographyParams compose(const HomographyParams& a, const HomographyParams& b);

}  // namespace geoshift
