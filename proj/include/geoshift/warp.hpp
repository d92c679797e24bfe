#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geoshift/geometry.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

/// Normalized coordinate of the center of pixel `index` on an axis of
/// `extent` pixels (the image spans [-1, 1]).
inline double pixel_to_normalized(double index, int extent) { return (2.0 * index + 1.0) / extent - 1.0; }
inline double normalized_to_pixel(double u, int extent) { return (u + 1.0) * 0.5 * extent - 0.5; }

/// Precomputed bilinear sampling pattern of warp(., params) on an h x w grid.
///
/// Output pixel q samples the input at apply_point(invert(params), q)
/// (inverse mapping). Samples that land outside [-1, 1]^2, or whose
/// projective denominator is <= kProjectiveEps, are invalid and yield 0.
/// Each valid sample keeps d(pixel position)/d(params) for backprop.
class WarpPlan {
 public:
  WarpPlan(const HomographyParams& params, int height, int width);

  const HomographyParams& params() const { return params_; }
  int height() const { return height_; }
  int width() const { return width_; }
  const std::vector<uint8_t>& valid() const { return valid_; }
  int valid_count() const;

  /// out[n, c] = warp(in[n, c]); in and out must be N x C x height x width.
  void forward(const Tensor& in, Tensor& out) const;

  /// Accumulates dL/d(in) into grad_in (if non-null) and returns dL/d(params).
  std::array<double, 4> backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const;

 private:
  struct Sample {
    int32_t x0, y0, x1, y1;
    double fx, fy;
    bool clamp_x, clamp_y;  // coordinate sits in the half-pixel border band
    std::array<double, 4> dpx;  // d(pixel x)/d(params)
    std::array<double, 4> dpy;
  };

  HomographyParams params_;
  int height_, width_;
  std::vector<uint8_t> valid_;
  std::vector<Sample> samples_;
};

struct WarpResult {
  Tensor data;
  std::vector<uint8_t> valid;  // height * width, shared by every sample and channel
};

/// Warps every sample and channel of `image` by `params`.
WarpResult warp(const Tensor& image, const HomographyParams& params);

}  // namespace geoshift
