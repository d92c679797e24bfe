#include "geoshift/model.hpp"

#include <algorithm>

#include "geoshift/error.hpp"

namespace geoshift {

GeoDetector::GeoDetector(const DetectorConfig& config, uint64_t seed) : config_(config) {
  std::mt19937_64 rng(seed);
  config_.head.stride = config.backbone.output_stride();
  if (config_.image_size % config_.head.stride != 0)
    throw Error(Errc::configuration, "image size must be divisible by the backbone stride");
  backbone = Backbone(config.backbone, rng);
  head = DetectionHead(config.backbone.output_channels(), config_.head, rng);
}

void GeoDetector::attach_transforms(const HomographySet& set, AggregatorKind k, uint64_t seed) {
  if (set.empty()) throw Error(Errc::configuration, "homography set must hold at least one element");
  for (const auto& p : set) validate(p);
  if (k == AggregatorKind::none && set.size() != 1)
    throw Error(Errc::configuration, "aggregator kind 'none' supports exactly one homography");
  transforms = set;
  kind = k;
  transform_grad.assign(set.size(), {});
  if (k == AggregatorKind::learned) {
    std::mt19937_64 rng(seed);
    aggregator.emplace(config_.backbone.output_channels(), static_cast<int>(set.size()), rng);
  } else {
    aggregator.reset();
  }
}

void GeoDetector::detach_transforms() {
  transforms.clear();
  transform_grad.clear();
  aggregator.reset();
  kind = AggregatorKind::none;
}

Tensor GeoDetector::features(const Tensor& images, ForwardModes modes) {
  if (transforms.empty()) return backbone.forward(images, modes.backbone);
  stack_ = multiwarp_.forward(images, transforms, backbone, modes.backbone);
  switch (kind) {
    case AggregatorKind::none: return stack_.maps.front();
    case AggregatorKind::mean: return reduce_stack(stack_, ReducerKind::mean);
    case AggregatorKind::max: return reduce_stack(stack_, ReducerKind::max);
    case AggregatorKind::learned:
      if (!aggregator || aggregator->num_transforms() != stack_.size())
        throw Error(Errc::configuration, "learned aggregator does not match the homography count");
      return aggregator->forward(stack_.concatenated(), modes.aggregator);
  }
  return {};
}

Tensor GeoDetector::forward(const Tensor& images, ForwardModes modes) {
  return head.forward(features(images, modes));
}

void GeoDetector::backward(const Tensor& grad_head, const GradientFlags& flags) {
  if (!flags.any()) return;
  const bool through_features = flags.backbone || flags.aggregator || (flags.transforms && uses_transforms());
  const Tensor grad_features = head.backward(grad_head, flags.head, through_features);
  if (!through_features) return;

  if (transforms.empty()) {
    if (flags.backbone) backbone.backward(grad_features, true, false);
    return;
  }
  std::vector<Tensor> grad_maps;
  switch (kind) {
    case AggregatorKind::none: grad_maps = {grad_features}; break;
    case AggregatorKind::mean: grad_maps = reduce_stack_backward(stack_, ReducerKind::mean, grad_features); break;
    case AggregatorKind::max: grad_maps = reduce_stack_backward(stack_, ReducerKind::max, grad_features); break;
    case AggregatorKind::learned: {
      if (!flags.backbone && !flags.transforms) {
        aggregator->backward(grad_features, flags.aggregator);
        return;
      }
      grad_maps = split_channels(aggregator->backward(grad_features, flags.aggregator), stack_.size());
      break;
    }
  }
  const auto g = multiwarp_.backward(grad_maps, backbone, flags.backbone, flags.transforms);
  if (flags.transforms)
    for (size_t i = 0; i < g.size(); ++i)
      for (int t = 0; t < 4; ++t) transform_grad[i][t] += g[i][t];
}

void GeoDetector::zero_grad() {
  visit_state([](const std::string&, Tensor&, Tensor* grad) {
    if (grad) grad->fill(0.0);
  });
  for (auto& g : transform_grad) g = {};
}

void GeoDetector::visit_state(const nn::StateVisitor& f) {
  backbone.visit(f);
  head.visit(f);
  if (aggregator) aggregator->visit(f);
}

std::vector<std::vector<Detection>> GeoDetector::predict(const Tensor& images, double score_threshold,
                                                         double nms_iou, int chunk) {
  std::vector<std::vector<Detection>> out;
  out.reserve(images.n());
  for (int begin = 0; begin < images.n(); begin += chunk) {
    const int count = std::min(chunk, images.n() - begin);
    const Tensor raw = forward(images.slice(begin, count), ForwardModes{});
    for (int s = 0; s < count; ++s)
      out.push_back(detect(raw, s, layout(), score_threshold, nms_iou, images.h(), images.w()));
  }
  return out;
}

}  // namespace geoshift
