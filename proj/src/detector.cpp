#include "geoshift/detector.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "geoshift/error.hpp"

namespace geoshift {

int BackboneConfig::output_stride() const {
  int s = 1;
  for (int v : strides) s *= v;
  return s;
}

void BackboneConfig::validate() const {
  if (widths.empty() || widths.size() != strides.size())
    throw Error(Errc::configuration, "backbone widths and strides must be non-empty and of equal length");
  for (int v : widths)
    if (v < 1) throw Error(Errc::configuration, "backbone widths must be positive");
  for (int v : strides)
    if (v != 1 && v != 2) throw Error(Errc::configuration, "backbone strides must be 1 or 2");
  if (output_channels() < 8) throw Error(Errc::configuration, "feature channels C must be >= 8");
}

Backbone::Backbone(const BackboneConfig& config, std::mt19937_64& rng) : config_(config) {
  config.validate();
  int in = config.input_channels;
  for (size_t i = 0; i < config.widths.size(); ++i) {
    nn::add_conv_bn_relu(net_, in, config.widths[i], 3, config.strides[i], rng);
    in = config.widths[i];
  }
}

Tensor Backbone::forward(const Tensor& images, nn::Mode mode) {
  const int stride = config_.output_stride();
  if (images.h() % stride != 0 || images.w() % stride != 0) {
    std::ostringstream os;
    os << "input " << images.h() << "x" << images.w() << " is not divisible by stride " << stride;
    throw Error(Errc::shape, os.str());
  }
  return net_.forward(images, mode);
}

Tensor Backbone::backward(const Tensor& grad, bool param_grads, bool input_grad) {
  return net_.backward(grad, param_grads, input_grad);
}

DetectionHead::DetectionHead(int in_channels, const HeadLayout& layout, std::mt19937_64& rng) : layout_(layout) {
  net_.add(nn::Conv2d(in_channels, in_channels, 3, 1, 1, rng));
  net_.add(nn::Relu{});
  nn::Conv2d out(in_channels, layout.channels(), 1, 1, 0, rng);
  for (double& v : out.weight.value.values()) v *= 0.1;
  // Start from a background-dominated prior so early training is stable.
  out.bias.value.data()[0] = 2.0;
  net_.add(std::move(out));
}

Tensor DetectionHead::forward(const Tensor& features) { return net_.forward(features, nn::Mode::eval); }

Tensor DetectionHead::backward(const Tensor& grad, bool param_grads, bool input_grad) {
  return net_.backward(grad, param_grads, input_grad);
}

namespace {

double cell_center(int index, int stride) { return (index + 0.5) * stride; }

void softmax(const double* logits, int count, double* probs) {
  const double mx = *std::max_element(logits, logits + count);
  double s = 0.0;
  for (int k = 0; k < count; ++k) {
    probs[k] = std::exp(logits[k] - mx);
    s += probs[k];
  }
  for (int k = 0; k < count; ++k) probs[k] /= s;
}

void validate_targets(std::span<const std::vector<Annotation>> targets, int num_classes, int height, int width) {
  constexpr double slack = 1e-6;
  for (const auto& image : targets)
    for (const auto& a : image) {
      const Box& b = a.box;
      const bool inside = b.x_min >= -slack && b.y_min >= -slack && b.x_max <= width + slack &&
                          b.y_max <= height + slack;
      if (!b.is_valid() || !inside || a.class_id < 0 || a.class_id >= num_classes) {
        std::ostringstream os;
        os << "box (" << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max << ") class "
           << a.class_id;
        throw Error(Errc::invalid_target, os.str());
      }
    }
}

}  // namespace

std::vector<Detection> decode_head(const Tensor& head_out, int sample, const HeadLayout& layout,
                                   double score_threshold, int image_height, int image_width) {
  const int classes = layout.num_classes + 1;
  const size_t plane = static_cast<size_t>(head_out.h()) * head_out.w();
  std::vector<double> logits(classes), probs(classes);
  std::vector<Detection> out;
  for (int i = 0; i < head_out.h(); ++i)
    for (int j = 0; j < head_out.w(); ++j) {
      const size_t k = static_cast<size_t>(i) * head_out.w() + j;
      for (int c = 0; c < classes; ++c) logits[c] = head_out.plane(sample, c)[k];
      softmax(logits.data(), classes, probs.data());
      const int best = static_cast<int>(std::max_element(probs.begin() + 1, probs.end()) - probs.begin());
      const double score = probs[best];
      if (!(score >= score_threshold)) continue;
      const double cx = cell_center(j, layout.stride), cy = cell_center(i, layout.stride);
      const double* reg = head_out.plane(sample, layout.reg_offset());
      Box b{cx - reg[k] * layout.box_scale, cy - reg[plane + k] * layout.box_scale,
            cx + reg[2 * plane + k] * layout.box_scale, cy + reg[3 * plane + k] * layout.box_scale};
      b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(image_width));
      b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(image_width));
      b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(image_height));
      b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(image_height));
      if (!b.is_valid()) continue;
      out.push_back({b, best - 1, score});
    }
  return out;
}

std::vector<Detection> detect(const Tensor& head_out, int sample, const HeadLayout& layout, double score_threshold,
                              double nms_iou, int image_height, int image_width) {
  return non_max_suppression(decode_head(head_out, sample, layout, score_threshold, image_height, image_width),
                             nms_iou);
}

LossBreakdown detection_loss(const Tensor& head_out, int first, std::span<const std::vector<Annotation>> targets,
                             LossMode mode, const HeadLayout& layout, int image_height, int image_width,
                             Tensor* grad, double weight) {
  if (head_out.c() != layout.channels()) throw Error(Errc::shape, "head output " + head_out.shape_string());
  if (first < 0 || first + static_cast<int>(targets.size()) > head_out.n())
    throw Error(Errc::shape, "loss sample range exceeds batch");
  validate_targets(targets, layout.num_classes, image_height, image_width);
  if (grad && !grad->same_shape(head_out)) *grad = Tensor(head_out.n(), head_out.c(), head_out.h(), head_out.w());

  const int classes = layout.num_classes + 1;
  const int gh = head_out.h(), gw = head_out.w();
  const size_t plane = static_cast<size_t>(gh) * gw;
  const double cells = static_cast<double>(plane) * static_cast<double>(targets.size());

  // Assignment: per cell, index of the responsible box or -1.
  std::vector<std::vector<int>> assign(targets.size(), std::vector<int>(plane, -1));
  int positives = 0;
  for (size_t s = 0; s < targets.size(); ++s) {
    const auto& boxes = targets[s];
    auto& cell_box = assign[s];
    for (int i = 0; i < gh; ++i)
      for (int j = 0; j < gw; ++j) {
        const double cx = cell_center(j, layout.stride), cy = cell_center(i, layout.stride);
        int bestb = -1;
        for (size_t b = 0; b < boxes.size(); ++b) {
          const Box& bx = boxes[b].box;
          if (cx > bx.x_min && cx < bx.x_max && cy > bx.y_min && cy < bx.y_max &&
              (bestb < 0 || bx.area() < boxes[bestb].box.area()))
            bestb = static_cast<int>(b);
        }
        cell_box[static_cast<size_t>(i) * gw + j] = bestb;
      }
    for (size_t b = 0; b < boxes.size(); ++b) {
      if (std::find(cell_box.begin(), cell_box.end(), static_cast<int>(b)) != cell_box.end()) continue;
      const Box& bx = boxes[b].box;
      const int j = std::clamp(static_cast<int>(0.5 * (bx.x_min + bx.x_max) / layout.stride), 0, gw - 1);
      const int i = std::clamp(static_cast<int>(0.5 * (bx.y_min + bx.y_max) / layout.stride), 0, gh - 1);
      int& slot = cell_box[static_cast<size_t>(i) * gw + j];
      if (slot < 0) slot = static_cast<int>(b);
    }
    for (int v : cell_box) positives += v >= 0;
  }

  LossBreakdown out;
  std::vector<double> logits(classes), probs(classes);
  const double reg_norm = 1.0 / std::max(1, positives);
  for (size_t s = 0; s < targets.size(); ++s) {
    const int n = first + static_cast<int>(s);
    for (size_t k = 0; k < plane; ++k) {
      for (int c = 0; c < classes; ++c) logits[c] = head_out.plane(n, c)[k];
      softmax(logits.data(), classes, probs.data());
      const int b = assign[s][k];
      const int label = b < 0 ? 0 : targets[s][b].class_id + 1;
      out.cls -= std::log(std::max(probs[label], 1e-300)) / cells;
      if (grad) {
        for (int c = 0; c < classes; ++c)
          grad->plane(n, c)[k] += weight * (probs[c] - (c == label ? 1.0 : 0.0)) / cells;
      }
      if (b < 0) continue;
      const Box& bx = targets[s][b].box;
      const double cx = cell_center(static_cast<int>(k % gw), layout.stride);
      const double cy = cell_center(static_cast<int>(k / gw), layout.stride);
      const double goal[4] = {(cx - bx.x_min) / layout.box_scale, (cy - bx.y_min) / layout.box_scale,
                              (bx.x_max - cx) / layout.box_scale, (bx.y_max - cy) / layout.box_scale};
      for (int t = 0; t < 4; ++t) {
        const double d = head_out.plane(n, layout.reg_offset() + t)[k] - goal[t];
        const double ad = std::abs(d);
        out.reg += reg_norm * (ad < kSmoothL1Beta ? 0.5 * d * d / kSmoothL1Beta : ad - 0.5 * kSmoothL1Beta);
        if (grad && mode == LossMode::source) {
          const double g = ad < kSmoothL1Beta ? d / kSmoothL1Beta : (d > 0 ? 1.0 : -1.0);
          grad->plane(n, layout.reg_offset() + t)[k] += weight * kRegressionWeight * reg_norm * g;
        }
      }
    }
  }
  out.total = mode == LossMode::source ? out.cls + kRegressionWeight * out.reg : out.cls;
  return out;
}

}  // namespace geoshift
