#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "geoshift/detector.hpp"
#include "geoshift/geometry.hpp"
#include "geoshift/nn.hpp"
#include "geoshift/warp.hpp"

namespace geoshift {

/// N unwarped feature maps (B x C x h x w each) with their validity masks.
/// Invalid positions hold zero.
struct FeatureStack {
  std::vector<Tensor> maps;
  std::vector<std::vector<uint8_t>> valid;  // h * w per map

  int size() const { return static_cast<int>(maps.size()); }
  /// Channel concatenation G = F'_1 (+) ... (+) F'_N: B x (C*N) x h x w.
  Tensor concatenated() const;
};

/// Splits a B x (C*N) x h x w gradient back into N maps of C channels.
std::vector<Tensor> split_channels(const Tensor& g, int parts);

enum class ReducerKind { mean, max };

/// Elementwise mean or max over the valid entries of the stack; positions
/// that are invalid in every map produce 0.
Tensor reduce_stack(const FeatureStack& stack, ReducerKind kind);
std::vector<Tensor> reduce_stack_backward(const FeatureStack& stack, ReducerKind kind, const Tensor& grad);

/// Learned fusion of the concatenated stack: three 3x3 conv + batch norm +
/// relu blocks followed by a 1x1 conv, C*N channels in and C out.
class Aggregator {
 public:
  Aggregator() = default;
  Aggregator(int channels, int num_transforms, std::mt19937_64& rng);

  Tensor forward(const Tensor& stacked, nn::Mode mode);
  Tensor backward(const Tensor& grad, bool param_grads);
  void visit(const nn::StateVisitor& f) { net_.visit("aggregator.", f); }

  int channels() const { return channels_; }
  int num_transforms() const { return num_transforms_; }

 private:
  int channels_ = 0;
  int num_transforms_ = 0;
  nn::Sequential net_;
};

/// Warp -> shared feature extractor -> unwarp for every homography of a set.
/// Keeps what backward() needs from the last forward().
class MultiWarp {
 public:
  FeatureStack forward(const Tensor& images, const HomographySet& set, Backbone& backbone, nn::Mode mode);

  /// Backpropagates per-map gradients. Accumulates backbone parameter
  /// gradients when requested and returns dL/d(params) per homography
  /// (zeros when transform_grads is false).
  std::vector<std::array<double, 4>> backward(const std::vector<Tensor>& grad_maps, Backbone& backbone,
                                              bool backbone_param_grads, bool transform_grads);

 private:
  Tensor images_;
  HomographySet set_;
  std::vector<WarpPlan> image_plans_;
  std::vector<WarpPlan> feature_plans_;
  Tensor raw_features_;  // (N*B) x C x h x w, branch-major
};

}  // namespace geoshift
