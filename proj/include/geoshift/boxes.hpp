#pragma once

#include <vector>

namespace geoshift {

/// Axis-aligned box in image pixels.
struct Box {
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() > 0 && height() > 0 ? width() * height() : 0.0; }
  bool is_valid() const;

  friend bool operator==(const Box&, const Box&) = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
};

struct Annotation {
  Box box;
  int class_id = 0;
};

double iou(const Box& a, const Box& b);

/// Descending score; equal scores fall back to lexicographic box
/// coordinates, then class, so the order is total.
bool detection_before(const Detection& a, const Detection& b);

/// Greedy per-class non-maximum suppression: keeps a detection unless a
/// kept same-class detection overlaps it with IoU > iou_threshold.
/// Result is sorted by detection_before.
std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double iou_threshold);

}  // namespace geoshift
