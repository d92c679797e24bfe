#pragma once

#include <json.hpp>
#include <vector>

#include "geoshift/boxes.hpp"

namespace geoshift {

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
};

struct ClassReport {
  int class_id = 0;
  int truths = 0;
  int tp = 0;
  int fp = 0;
  double ap50 = 0.0;
  std::vector<PrPoint> curve;
};

struct EvalReport {
  std::vector<ClassReport> classes;  // every class id seen in truths or predictions
  double mean_ap50 = 0.0;            // over classes with at least one truth
  int tp = 0, fp = 0, fn = 0;
};

inline constexpr double kMatchIou = 0.5;

/// VOC-style AP with IoU > 0.5: per class, predictions are taken in
/// descending score and matched to the highest-IoU truth of the same image;
/// a truth already claimed makes the prediction a false positive. AP is the
/// area under the all-point interpolated precision/recall curve.
EvalReport ap50(const std::vector<std::vector<Detection>>& predictions,
                const std::vector<std::vector<Annotation>>& truths);

nlohmann::json to_json(const EvalReport& r);

}  // namespace geoshift
