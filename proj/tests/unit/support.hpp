#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "geoshift/error.hpp"
#include "geoshift/random.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift::testing {

inline Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return Errc::io;
}

/// Low-frequency image that fades to zero at the border, so finite
/// differences do not straddle validity flips or interpolation kinks.
inline Tensor smooth_image(int n, int c, int h, int w, std::mt19937_64& rng) {
  Tensor t(n, c, h, w);
  for (int b = 0; b < n; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const double fx = uniform(rng, 0.5, 1.5), fy = uniform(rng, 0.5, 1.5);
      const double ph = uniform(rng, 0.0, 6.28), amp = uniform(rng, 0.5, 1.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double u = (2.0 * x + 1.0) / w - 1.0, v = (2.0 * y + 1.0) / h - 1.0;
          const double window = std::pow(std::cos(0.5 * M_PI * u) * std::cos(0.5 * M_PI * v), 2);
          t.at(b, ch, y, x) = amp * window * (1.0 + 0.5 * std::sin(fx * 3.0 * u + fy * 2.0 * v + ph));
        }
    }
  return t;
}

inline Tensor random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, h, w);
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace geoshift::testing
