#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "geoshift/detector.hpp"
#include "geoshift/multiwarp.hpp"

namespace geoshift {

/// How the unwarped stack is fused. `none` means a plain detector
/// (an empty homography set, or a single map passed through).
enum class AggregatorKind { none, learned, mean, max };

struct DetectorConfig {
  BackboneConfig backbone;
  HeadLayout head;  // head.stride is derived from the backbone
  int image_size = 64;
};

/// Which parts receive gradients in backward().
struct GradientFlags {
  bool backbone = false;
  bool head = false;
  bool aggregator = false;
  bool transforms = false;

  bool any() const { return backbone || head || aggregator || transforms; }
};

/// Batch-norm behaviour per component.
struct ForwardModes {
  nn::Mode backbone = nn::Mode::eval;
  nn::Mode aggregator = nn::Mode::eval;
};

/// Feature extractor, optional homography set + aggregator, and detection
/// head. Copying a GeoDetector deep-copies every weight.
class GeoDetector {
 public:
  GeoDetector() = default;
  GeoDetector(const DetectorConfig& config, uint64_t seed);

  const DetectorConfig& config() const { return config_; }
  const HeadLayout& layout() const { return head.layout(); }

  /// Installs a homography set with a learned aggregator (freshly
  /// initialized from `seed`) or a builtin reducer.
  void attach_transforms(const HomographySet& set, AggregatorKind kind, uint64_t seed);
  void detach_transforms();

  bool uses_transforms() const { return !transforms.empty(); }

  /// Aggregated (or plain) H/stride x W/stride x C features.
  Tensor features(const Tensor& images, ForwardModes modes);
  /// Raw dense head output for a batch of images.
  Tensor forward(const Tensor& images, ForwardModes modes);
  /// Backpropagates dL/d(head output) from the last forward().
  void backward(const Tensor& grad_head, const GradientFlags& flags);

  void zero_grad();
  /// Network state (backbone, head, aggregator if present). Transforms are
  /// exposed separately.
  void visit_state(const nn::StateVisitor& f);

  /// Eval-mode inference in chunks; one sorted detection list per image.
  std::vector<std::vector<Detection>> predict(const Tensor& images, double score_threshold, double nms_iou,
                                              int chunk = 8);

  Backbone backbone;
  DetectionHead head;
  std::optional<Aggregator> aggregator;
  HomographySet transforms;
  AggregatorKind kind = AggregatorKind::none;
  std::vector<std::array<double, 4>> transform_grad;

 private:
  DetectorConfig config_;
  MultiWarp multiwarp_;
  FeatureStack stack_;
};

}  // namespace geoshift
