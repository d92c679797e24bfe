#include "geoshift/warp.hpp"

#include <algorithm>
#include <cmath>

#include "geoshift/error.hpp"

namespace geoshift {

WarpPlan::WarpPlan(const HomographyParams& params, int height, int width)
    : params_(params), height_(height), width_(width) {
  validate(params);
  if (height < 2 || width < 2) throw Error(Errc::shape, "warp needs at least a 2x2 grid");
  const size_t count = static_cast<size_t>(height) * width;
  valid_.assign(count, 0);
  samples_.resize(count);

  const double sx = params.sx, sy = params.sy, lx = params.lx, ly = params.ly;
  const double half_w = 0.5 * width, half_h = 0.5 * height;

  for (int i = 0; i < height; ++i) {
    const double qy = pixel_to_normalized(i, height);
    for (int j = 0; j < width; ++j) {
      const double qx = pixel_to_normalized(j, width);
      const size_t k = static_cast<size_t>(i) * width + j;
      // Source point through invert(params) = (1/sx, 1/sy, -lx/sx, -ly/sy).
      const double w = 1.0 - lx / sx * qx - ly / sy * qy;
      if (!(w > kProjectiveEps)) continue;
      const double ux = qx / (sx * w);
      const double uy = qy / (sy * w);
      if (!(ux >= -1.0 && ux <= 1.0 && uy >= -1.0 && uy <= 1.0)) continue;
      valid_[k] = 1;

      Sample& s = samples_[k];
      const double px = normalized_to_pixel(ux, width);
      const double py = normalized_to_pixel(uy, height);
      const double cx = std::clamp(px, 0.0, width - 1.0);
      const double cy = std::clamp(py, 0.0, height - 1.0);
      s.clamp_x = cx != px;
      s.clamp_y = cy != py;
      s.x0 = std::min(static_cast<int32_t>(cx), width - 2);
      s.y0 = std::min(static_cast<int32_t>(cy), height - 2);
      s.x1 = s.x0 + 1;
      s.y1 = s.y0 + 1;
      s.fx = cx - s.x0;
      s.fy = cy - s.y0;

      const std::array<double, 4> dw = {lx * qx / (sx * sx), ly * qy / (sy * sy), -qx / sx, -qy / sy};
      const double ux_w = ux / w, uy_w = uy / w;
      const std::array<double, 4> dux = {-qx / (sx * sx * w) - ux_w * dw[0], -ux_w * dw[1], -ux_w * dw[2],
                                         -ux_w * dw[3]};
      const std::array<double, 4> duy = {-uy_w * dw[0], -qy / (sy * sy * w) - uy_w * dw[1], -uy_w * dw[2],
                                         -uy_w * dw[3]};
      for (int t = 0; t < 4; ++t) {
        s.dpx[t] = s.clamp_x ? 0.0 : dux[t] * half_w;
        s.dpy[t] = s.clamp_y ? 0.0 : duy[t] * half_h;
      }
    }
  }
}

int WarpPlan::valid_count() const {
  return static_cast<int>(std::count(valid_.begin(), valid_.end(), uint8_t{1}));
}

void WarpPlan::forward(const Tensor& in, Tensor& out) const {
  if (in.h() != height_ || in.w() != width_) throw Error(Errc::shape, "warp input " + in.shape_string());
  if (!out.same_shape(in)) out = Tensor(in.n(), in.c(), in.h(), in.w());
  const size_t count = valid_.size();
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      const double* src = in.plane(n, c);
      double* dst = out.plane(n, c);
      for (size_t k = 0; k < count; ++k) {
        if (!valid_[k]) {
          dst[k] = 0.0;
          continue;
        }
        const Sample& s = samples_[k];
        const double v00 = src[s.y0 * width_ + s.x0], v01 = src[s.y0 * width_ + s.x1];
        const double v10 = src[s.y1 * width_ + s.x0], v11 = src[s.y1 * width_ + s.x1];
        dst[k] = (1.0 - s.fy) * ((1.0 - s.fx) * v00 + s.fx * v01) + s.fy * ((1.0 - s.fx) * v10 + s.fx * v11);
      }
    }
}

std::array<double, 4> WarpPlan::backward(const Tensor& in, const Tensor& grad_out, Tensor* grad_in) const {
  if (!grad_out.same_shape(in)) throw Error(Errc::shape, "warp backward: gradient shape mismatch");
  if (grad_in && !grad_in->same_shape(in)) *grad_in = Tensor(in.n(), in.c(), in.h(), in.w());
  std::array<double, 4> grad_params{};
  const size_t count = valid_.size();
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      const double* src = in.plane(n, c);
      const double* g = grad_out.plane(n, c);
      double* gi = grad_in ? grad_in->plane(n, c) : nullptr;
      for (size_t k = 0; k < count; ++k) {
        if (!valid_[k] || g[k] == 0.0) continue;
        const Sample& s = samples_[k];
        const size_t i00 = s.y0 * width_ + s.x0, i01 = s.y0 * width_ + s.x1;
        const size_t i10 = s.y1 * width_ + s.x0, i11 = s.y1 * width_ + s.x1;
        if (gi) {
          gi[i00] += g[k] * (1.0 - s.fy) * (1.0 - s.fx);
          gi[i01] += g[k] * (1.0 - s.fy) * s.fx;
          gi[i10] += g[k] * s.fy * (1.0 - s.fx);
          gi[i11] += g[k] * s.fy * s.fx;
        }
        const double dvdx = (1.0 - s.fy) * (src[i01] - src[i00]) + s.fy * (src[i11] - src[i10]);
        const double dvdy = (1.0 - s.fx) * (src[i10] - src[i00]) + s.fx * (src[i11] - src[i01]);
        for (int t = 0; t < 4; ++t) grad_params[t] += g[k] * (dvdx * s.dpx[t] + dvdy * s.dpy[t]);
      }
    }
  return grad_params;
}

WarpResult warp(const Tensor& image, const HomographyParams& params) {
  const WarpPlan plan(params, image.h(), image.w());
  WarpResult r;
  plan.forward(image, r.data);
  r.valid = plan.valid();
  return r;
}

}  // namespace geoshift
