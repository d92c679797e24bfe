#include "geoshift/nn.hpp"

#include <Eigen/Core>
#include <cmath>

#include "geoshift/error.hpp"

namespace geoshift::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

}  // namespace

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int pad, std::mt19937_64& rng)
    : weight(Tensor(out_channels, in_channels, kernel, kernel)),
      bias(Tensor(1, out_channels, 1, 1)),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride),
      pad_(pad) {
  // He initialization for ReLU networks.
  const double stddev = std::sqrt(2.0 / (in_channels * kernel * kernel));
  std::normal_distribution<double> normal(0.0, stddev);
  for (double& v : weight.value.values()) v = normal(rng);
}

void Conv2d::im2col(const double* x, int h, int w, double* cols) const {
  const int oh = out_extent(h), ow = out_extent(w);
  for (int c = 0; c < in_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        double* row = cols + ((static_cast<size_t>(c) * k_ + ky) * k_ + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            row[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(c * h + iy) * w + ix] : 0.0;
          }
        }
      }
}

void Conv2d::col2im(const double* cols, int h, int w, double* x) const {
  const int oh = out_extent(h), ow = out_extent(w);
  for (int c = 0; c < in_; ++c)
    for (int ky = 0; ky < k_; ++ky)
      for (int kx = 0; kx < k_; ++kx) {
        const double* row = cols + ((static_cast<size_t>(c) * k_ + ky) * k_ + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride_ - pad_ + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride_ - pad_ + kx;
            if (ix >= 0 && ix < w) x[(c * h + iy) * w + ix] += row[oy * ow + ox];
          }
        }
      }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c() != in_) throw Error(Errc::shape, "conv expects " + std::to_string(in_) + " channels, got " + x.shape_string());
  input_ = x;
  const int oh = out_extent(x.h()), ow = out_extent(x.w());
  const int patch = in_ * k_ * k_, pixels = oh * ow;
  Tensor y(x.n(), out_, oh, ow);
  AlignedBuffer cols(static_cast<size_t>(patch) * pixels);
  const ConstMatMap wmat(weight.value.data(), out_, patch);
  for (int n = 0; n < x.n(); ++n) {
    const double* src = x.sample(n);
    const double* col_ptr = src;
    if (k_ != 1 || stride_ != 1 || pad_ != 0) {
      im2col(src, x.h(), x.w(), cols.data());
      col_ptr = cols.data();
    }
    MatMap out(y.sample(n), out_, pixels);
    out.noalias() = wmat * ConstMatMap(col_ptr, patch, pixels);
    for (int o = 0; o < out_; ++o) out.row(o).array() += bias.value.data()[o];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_y, bool param_grads, bool input_grad) {
  const Tensor& x = input_;
  const int oh = out_extent(x.h()), ow = out_extent(x.w());
  const int patch = in_ * k_ * k_, pixels = oh * ow;
  if (grad_y.n() != x.n() || grad_y.c() != out_ || grad_y.h() != oh || grad_y.w() != ow)
    throw Error(Errc::shape, "conv backward gradient " + grad_y.shape_string());
  const bool direct = k_ == 1 && stride_ == 1 && pad_ == 0;
  Tensor grad_x;
  if (input_grad) grad_x = Tensor(x.n(), x.c(), x.h(), x.w());
  AlignedBuffer cols(static_cast<size_t>(patch) * pixels);
  AlignedBuffer gcols(static_cast<size_t>(patch) * pixels);
  const ConstMatMap wmat(weight.value.data(), out_, patch);
  MatMap gw(weight.grad.data(), out_, patch);
  for (int n = 0; n < x.n(); ++n) {
    const ConstMatMap gy(grad_y.sample(n), out_, pixels);
    if (param_grads) {
      const double* col_ptr = x.sample(n);
      if (!direct) {
        im2col(x.sample(n), x.h(), x.w(), cols.data());
        col_ptr = cols.data();
      }
      gw.noalias() += gy * ConstMatMap(col_ptr, patch, pixels).transpose();
      for (int o = 0; o < out_; ++o) bias.grad.data()[o] += gy.row(o).sum();
    }
    if (input_grad) {
      if (direct) {
        MatMap(grad_x.sample(n), patch, pixels).noalias() = wmat.transpose() * gy;
      } else {
        MatMap(gcols.data(), patch, pixels).noalias() = wmat.transpose() * gy;
        col2im(gcols.data(), x.h(), x.w(), grad_x.sample(n));
      }
    }
  }
  return grad_x;
}

void Conv2d::visit(const std::string& prefix, const StateVisitor& f) {
  f(prefix + "weight", weight.value, &weight.grad);
  f(prefix + "bias", bias.value, &bias.grad);
}

BatchNorm2d::BatchNorm2d(int channels, double momentum, double eps)
    : gamma(Tensor(1, channels, 1, 1, 1.0)),
      beta(Tensor(1, channels, 1, 1, 0.0)),
      running_mean(1, channels, 1, 1, 0.0),
      running_var(1, channels, 1, 1, 1.0),
      momentum_(momentum),
      eps_(eps) {}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  const int channels = gamma.value.c();
  if (x.c() != channels) throw Error(Errc::shape, "batch norm channel mismatch " + x.shape_string());
  last_mode_ = mode;
  const size_t plane = static_cast<size_t>(x.h()) * x.w();
  const double count = static_cast<double>(plane) * x.n();
  Tensor y(x.n(), x.c(), x.h(), x.w());
  xhat_ = Tensor(x.n(), x.c(), x.h(), x.w());
  inv_std_.assign(channels, 0.0);
  for (int c = 0; c < channels; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, c);
        for (size_t k = 0; k < plane; ++k) s += p[k];
      }
      mean = s / count;
      double ss = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, c);
        for (size_t k = 0; k < plane; ++k) ss += (p[k] - mean) * (p[k] - mean);
      }
      var = ss / count;
      const double unbiased = count > 1 ? ss / (count - 1) : var;
      running_mean.data()[c] = (1.0 - momentum_) * running_mean.data()[c] + momentum_ * mean;
      running_var.data()[c] = (1.0 - momentum_) * running_var.data()[c] + momentum_ * unbiased;
    } else {
      mean = running_mean.data()[c];
      var = running_var.data()[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma.value.data()[c], b = beta.value.data()[c];
    for (int n = 0; n < x.n(); ++n) {
      const double* p = x.plane(n, c);
      double* xh = xhat_.plane(n, c);
      double* q = y.plane(n, c);
      for (size_t k = 0; k < plane; ++k) {
        xh[k] = (p[k] - mean) * inv;
        q[k] = g * xh[k] + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_y, bool param_grads) {
  const int channels = gamma.value.c();
  const size_t plane = static_cast<size_t>(grad_y.h()) * grad_y.w();
  const double count = static_cast<double>(plane) * grad_y.n();
  Tensor grad_x(grad_y.n(), grad_y.c(), grad_y.h(), grad_y.w());
  for (int c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int n = 0; n < grad_y.n(); ++n) {
      const double* g = grad_y.plane(n, c);
      const double* xh = xhat_.plane(n, c);
      for (size_t k = 0; k < plane; ++k) {
        sum_g += g[k];
        sum_gx += g[k] * xh[k];
      }
    }
    if (param_grads) {
      gamma.grad.data()[c] += sum_gx;
      beta.grad.data()[c] += sum_g;
    }
    const double scale = gamma.value.data()[c] * inv_std_[c];
    for (int n = 0; n < grad_y.n(); ++n) {
      const double* g = grad_y.plane(n, c);
      const double* xh = xhat_.plane(n, c);
      double* gx = grad_x.plane(n, c);
      if (last_mode_ == Mode::train) {
        for (size_t k = 0; k < plane; ++k) gx[k] = scale * (g[k] - sum_g / count - xh[k] * sum_gx / count);
      } else {
        for (size_t k = 0; k < plane; ++k) gx[k] = scale * g[k];
      }
    }
  }
  return grad_x;
}

void BatchNorm2d::visit(const std::string& prefix, const StateVisitor& f) {
  f(prefix + "gamma", gamma.value, &gamma.grad);
  f(prefix + "beta", beta.value, &beta.grad);
  f(prefix + "running_mean", running_mean, nullptr);
  f(prefix + "running_var", running_var, nullptr);
}

Tensor Relu::forward(const Tensor& x) {
  output_ = x;
  for (double& v : output_.values()) v = v > 0.0 ? v : 0.0;
  return output_;
}

Tensor Relu::backward(const Tensor& grad_y) const {
  Tensor g = grad_y;
  auto out = output_.values();
  auto gv = g.values();
  for (size_t i = 0; i < gv.size(); ++i)
    if (!(out[i] > 0.0)) gv[i] = 0.0;
  return g;
}

Tensor Sequential::forward(const Tensor& x, Mode mode) {
  Tensor cur = x;
  for (auto& layer : layers_) {
    cur = std::visit(
        [&](auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, BatchNorm2d>) return l.forward(cur, mode);
          else return l.forward(cur);
        },
        layer);
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_y, bool param_grads, bool input_grad) {
  Tensor cur = grad_y;
  for (size_t i = layers_.size(); i-- > 0;) {
    const bool first = i == 0;
    cur = std::visit(
        [&](auto& l) -> Tensor {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Conv2d>) return l.backward(cur, param_grads, input_grad || !first);
          else if constexpr (std::is_same_v<T, BatchNorm2d>) return l.backward(cur, param_grads);
          else return l.backward(cur);
        },
        layers_[i]);
  }
  return cur;
}

void Sequential::visit(const std::string& prefix, const StateVisitor& f) {
  for (size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = prefix + std::to_string(i) + ".";
    std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (!std::is_same_v<T, Relu>) l.visit(p, f);
        },
        layers_[i]);
  }
}

void add_conv_bn_relu(Sequential& seq, int in, int out, int kernel, int stride, std::mt19937_64& rng) {
  seq.add(Conv2d(in, out, kernel, stride, kernel / 2, rng));
  seq.add(BatchNorm2d(out));
  seq.add(Relu{});
}

}  // namespace geoshift::nn
