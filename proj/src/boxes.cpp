#include "geoshift/boxes.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace geoshift {

bool Box::is_valid() const {
  return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) && std::isfinite(y_max) &&
         x_min < x_max && y_min < y_max;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

bool detection_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max, a.class_id) <
         std::tie(b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max, b.class_id);
}

std::vector<Detection> non_max_suppression(std::vector<Detection> candidates, double iou_threshold) {
  std::sort(candidates.begin(), candidates.end(), detection_before);
  std::vector<Detection> kept;
  for (const auto& d : candidates) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace geoshift
