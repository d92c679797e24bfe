#include "geoshift/multiwarp.hpp"

#include <algorithm>

#include "geoshift/error.hpp"

namespace geoshift {

Tensor FeatureStack::concatenated() const {
  if (maps.empty()) throw Error(Errc::shape, "empty feature stack");
  const Tensor& first = maps.front();
  const int c = first.c();
  Tensor g(first.n(), c * size(), first.h(), first.w());
  const size_t block = first.sample_size();
  for (int b = 0; b < first.n(); ++b)
    for (int i = 0; i < size(); ++i) std::copy_n(maps[i].sample(b), block, g.sample(b) + i * block);
  return g;
}

std::vector<Tensor> split_channels(const Tensor& g, int parts) {
  if (parts < 1 || g.c() % parts != 0) throw Error(Errc::shape, "cannot split " + g.shape_string());
  const int c = g.c() / parts;
  std::vector<Tensor> out(parts, Tensor(g.n(), c, g.h(), g.w()));
  const size_t block = out[0].sample_size();
  for (int b = 0; b < g.n(); ++b)
    for (int i = 0; i < parts; ++i) std::copy_n(g.sample(b) + i * block, block, out[i].sample(b));
  return out;
}

Tensor reduce_stack(const FeatureStack& stack, ReducerKind kind) {
  if (stack.maps.empty()) throw Error(Errc::shape, "empty feature stack");
  const Tensor& first = stack.maps.front();
  Tensor out(first.n(), first.c(), first.h(), first.w());
  const size_t plane = static_cast<size_t>(first.h()) * first.w();
  for (int b = 0; b < first.n(); ++b)
    for (int c = 0; c < first.c(); ++c) {
      double* dst = out.plane(b, c);
      for (size_t k = 0; k < plane; ++k) {
        int count = 0;
        double acc = 0.0;
        for (int i = 0; i < stack.size(); ++i) {
          if (!stack.valid[i][k]) continue;
          const double v = stack.maps[i].plane(b, c)[k];
          if (kind == ReducerKind::mean) acc += v;
          else acc = count == 0 ? v : std::max(acc, v);
          ++count;
        }
        dst[k] = count == 0 ? 0.0 : (kind == ReducerKind::mean ? acc / count : acc);
      }
    }
  return out;
}

std::vector<Tensor> reduce_stack_backward(const FeatureStack& stack, ReducerKind kind, const Tensor& grad) {
  const Tensor& first = stack.maps.front();
  std::vector<Tensor> out(stack.size(), Tensor(first.n(), first.c(), first.h(), first.w()));
  const size_t plane = static_cast<size_t>(first.h()) * first.w();
  for (int b = 0; b < first.n(); ++b)
    for (int c = 0; c < first.c(); ++c) {
      const double* g = grad.plane(b, c);
      for (size_t k = 0; k < plane; ++k) {
        if (kind == ReducerKind::mean) {
          int count = 0;
          for (int i = 0; i < stack.size(); ++i) count += stack.valid[i][k];
          if (count == 0) continue;
          for (int i = 0; i < stack.size(); ++i)
            if (stack.valid[i][k]) out[i].plane(b, c)[k] = g[k] / count;
        } else {
          int arg = -1;
          double best = 0.0;
          for (int i = 0; i < stack.size(); ++i) {
            if (!stack.valid[i][k]) continue;
            const double v = stack.maps[i].plane(b, c)[k];
            if (arg < 0 || v > best) {
              arg = i;
              best = v;
            }
          }
          if (arg >= 0) out[arg].plane(b, c)[k] = g[k];
        }
      }
    }
  return out;
}

Aggregator::Aggregator(int channels, int num_transforms, std::mt19937_64& rng)
    : channels_(channels), num_transforms_(num_transforms) {
  if (num_transforms < 1) throw Error(Errc::configuration, "aggregator needs at least one transform");
  nn::add_conv_bn_relu(net_, channels * num_transforms, channels, 3, 1, rng);
  nn::add_conv_bn_relu(net_, channels, channels, 3, 1, rng);
  nn::add_conv_bn_relu(net_, channels, channels, 3, 1, rng);
  net_.add(nn::Conv2d(channels, channels, 1, 1, 0, rng));
}

Tensor Aggregator::forward(const Tensor& stacked, nn::Mode mode) {
  if (stacked.c() != channels_ * num_transforms_)
    throw Error(Errc::configuration, "aggregator built for N=" + std::to_string(num_transforms_) +
                                         " received " + stacked.shape_string());
  return net_.forward(stacked, mode);
}

Tensor Aggregator::backward(const Tensor& grad, bool param_grads) { return net_.backward(grad, param_grads, true); }

FeatureStack MultiWarp::forward(const Tensor& images, const HomographySet& set, Backbone& backbone, nn::Mode mode) {
  if (set.empty()) throw Error(Errc::configuration, "empty homography set");
  images_ = images;
  set_ = set;
  const int n = static_cast<int>(set.size());
  const int batch = images.n();
  image_plans_.clear();
  feature_plans_.clear();

  std::vector<Tensor> warped(n);
  for (int i = 0; i < n; ++i) {
    image_plans_.emplace_back(set[i], images.h(), images.w());
    image_plans_.back().forward(images, warped[i]);
  }
  raw_features_ = backbone.forward(Tensor::concat_batch(warped), mode);

  FeatureStack stack;
  for (int i = 0; i < n; ++i) {
    feature_plans_.emplace_back(invert(set[i]), raw_features_.h(), raw_features_.w());
    Tensor unwarped;
    feature_plans_.back().forward(raw_features_.slice(i * batch, batch), unwarped);
    stack.maps.push_back(std::move(unwarped));
    stack.valid.push_back(feature_plans_.back().valid());
  }
  return stack;
}

std::vector<std::array<double, 4>> MultiWarp::backward(const std::vector<Tensor>& grad_maps, Backbone& backbone,
                                                       bool backbone_param_grads, bool transform_grads) {
  const int n = static_cast<int>(set_.size());
  const int batch = images_.n();
  std::vector<std::array<double, 4>> grads(n, std::array<double, 4>{});
  if (!backbone_param_grads && !transform_grads) return grads;

  Tensor grad_raw(raw_features_.n(), raw_features_.c(), raw_features_.h(), raw_features_.w());
  for (int i = 0; i < n; ++i) {
    const Tensor branch = raw_features_.slice(i * batch, batch);
    Tensor grad_branch;
    const auto g_inv = feature_plans_[i].backward(branch, grad_maps[i], &grad_branch);
    std::copy(grad_branch.values().begin(), grad_branch.values().end(), grad_raw.sample(i * batch));
    if (transform_grads) {
      const auto g = invert_vjp(set_[i], g_inv);
      for (int t = 0; t < 4; ++t) grads[i][t] += g[t];
    }
  }
  const Tensor grad_images = backbone.backward(grad_raw, backbone_param_grads, transform_grads);
  if (transform_grads) {
    for (int i = 0; i < n; ++i) {
      const auto g = image_plans_[i].backward(images_, grad_images.slice(i * batch, batch), nullptr);
      for (int t = 0; t < 4; ++t) grads[i][t] += g[t];
    }
  }
  return grads;
}

}  // namespace geoshift
