#pragma once

#include <random>
#include <span>
#include <vector>

#include "geoshift/boxes.hpp"
#include "geoshift/nn.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

struct BackboneConfig {
  std::vector<int> widths = {16, 16, 32, 32};  // last entry is the feature channel count C
  std::vector<int> strides = {2, 1, 2, 1};     // product is the output stride
  int input_channels = 3;

  int output_channels() const { return widths.back(); }
  int output_stride() const;
  void validate() const;
};

/// Channel layout of the dense head output:
///   [0, num_classes]            class logits, index 0 is background
///   [num_classes + 1, +4)       box edge distances (left, top, right, bottom)
///                               from the cell center, in units of box_scale px
struct HeadLayout {
  int num_classes = 3;
  int stride = 8;
  double box_scale = 16.0;

  int channels() const { return num_classes + 5; }
  int reg_offset() const { return num_classes + 1; }
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& config, std::mt19937_64& rng);

  /// H x W x 3 images -> (H / stride) x (W / stride) x C features.
  Tensor forward(const Tensor& images, nn::Mode mode);
  Tensor backward(const Tensor& grad, bool param_grads, bool input_grad);
  void visit(const nn::StateVisitor& f) { net_.visit("backbone.", f); }

  const BackboneConfig& config() const { return config_; }
  nn::Sequential& net() { return net_; }

 private:
  BackboneConfig config_;
  nn::Sequential net_;
};

class DetectionHead {
 public:
  DetectionHead() = default;
  DetectionHead(int in_channels, const HeadLayout& layout, std::mt19937_64& rng);

  Tensor forward(const Tensor& features);
  Tensor backward(const Tensor& grad, bool param_grads, bool input_grad);
  void visit(const nn::StateVisitor& f) { net_.visit("head.", f); }

  const HeadLayout& layout() const { return layout_; }

 private:
  HeadLayout layout_;
  nn::Sequential net_;
};

/// Turns one sample of raw head output into candidate detections:
/// per cell, the best foreground class and its softmax probability.
/// Candidates with score < score_threshold or degenerate boxes are dropped;
/// boxes are clipped to the image.
std::vector<Detection> decode_head(const Tensor& head_out, int sample, const HeadLayout& layout,
                                   double score_threshold, int image_height, int image_width);

/// decode_head followed by per-class NMS; sorted by descending score.
std::vector<Detection> detect(const Tensor& head_out, int sample, const HeadLayout& layout, double score_threshold,
                              double nms_iou, int image_height, int image_width);

enum class LossMode { source, target };

struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

inline constexpr double kRegressionWeight = 1.0;
inline constexpr double kSmoothL1Beta = 0.1;

/// Dense detection loss over samples [first, first + targets.size()) of
/// head_out. Cells whose center lies inside a box are positives (smallest
/// box wins); a box containing no cell center claims the cell holding its
/// center. cls is the mean softmax cross-entropy over all cells with
/// background as class 0; reg is the smooth-L1 edge-distance error summed
/// over coordinates and averaged over positive cells. Source mode totals
/// cls + reg; target mode totals cls alone (reg is still reported).
///
/// When `grad` is non-null, weight * d(total)/d(head_out) is accumulated
/// into it.
LossBreakdown detection_loss(const Tensor& head_out, int first, std::span<const std::vector<Annotation>> targets,
                             LossMode mode, const HeadLayout& layout, int image_height, int image_width,
                             Tensor* grad = nullptr, double weight = 1.0);

}  // namespace geoshift
