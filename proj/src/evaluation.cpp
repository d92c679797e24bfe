#include "geoshift/evaluation.hpp"

#include <algorithm>
#include <set>

#include "geoshift/error.hpp"

namespace geoshift {

namespace {

struct Ranked {
  Detection det;
  int image;
};

ClassReport evaluate_class(int cls, const std::vector<std::vector<Detection>>& predictions,
                           const std::vector<std::vector<Annotation>>& truths) {
  ClassReport r;
  r.class_id = cls;
  std::vector<std::vector<const Annotation*>> gt(truths.size());
  for (size_t i = 0; i < truths.size(); ++i)
    for (const auto& a : truths[i])
      if (a.class_id == cls) {
        gt[i].push_back(&a);
        ++r.truths;
      }
  std::vector<Ranked> ranked;
  for (size_t i = 0; i < predictions.size(); ++i)
    for (const auto& d : predictions[i])
      if (d.class_id == cls) ranked.push_back({d, static_cast<int>(i)});
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.det.score != b.det.score) return a.det.score > b.det.score;
    return a.image < b.image;
  });

  std::vector<std::vector<bool>> claimed(truths.size());
  for (size_t i = 0; i < gt.size(); ++i) claimed[i].assign(gt[i].size(), false);
  std::vector<int> tp_flags;
  tp_flags.reserve(ranked.size());
  for (const auto& p : ranked) {
    double best = 0.0;
    int arg = -1;
    for (size_t k = 0; k < gt[p.image].size(); ++k) {
      const double o = iou(p.det.box, gt[p.image][k]->box);
      if (o > best) {
        best = o;
        arg = static_cast<int>(k);
      }
    }
    const bool hit = arg >= 0 && best > kMatchIou && !claimed[p.image][arg];
    if (hit) claimed[p.image][arg] = true;
    tp_flags.push_back(hit ? 1 : 0);
    (hit ? r.tp : r.fp) += 1;
  }

  if (r.truths == 0) return r;
  int tp = 0, fp = 0;
  for (int f : tp_flags) {
    (f ? tp : fp) += 1;
    r.curve.push_back({static_cast<double>(tp) / r.truths, static_cast<double>(tp) / (tp + fp)});
  }
  // All-point interpolation: precision envelope integrated over recall steps.
  std::vector<double> envelope(r.curve.size());
  double running = 0.0;
  for (size_t k = r.curve.size(); k-- > 0;) envelope[k] = running = std::max(running, r.curve[k].precision);
  double ap = 0.0, prev_recall = 0.0;
  for (size_t k = 0; k < r.curve.size(); ++k) {
    ap += (r.curve[k].recall - prev_recall) * envelope[k];
    prev_recall = r.curve[k].recall;
  }
  r.ap50 = std::clamp(ap, 0.0, 1.0);
  return r;
}

}  // namespace

EvalReport ap50(const std::vector<std::vector<Detection>>& predictions,
                const std::vector<std::vector<Annotation>>& truths) {
  if (predictions.size() != truths.size())
    throw Error(Errc::invalid_parameter, "predictions and truths cover different image counts");
  std::set<int> classes;
  for (const auto& img : truths)
    for (const auto& a : img) classes.insert(a.class_id);
  for (const auto& img : predictions)
    for (const auto& d : img) classes.insert(d.class_id);

  EvalReport report;
  double sum = 0.0;
  int scored = 0;
  for (int c : classes) {
    ClassReport cr = evaluate_class(c, predictions, truths);
    report.tp += cr.tp;
    report.fp += cr.fp;
    report.fn += cr.truths - cr.tp;
    if (cr.truths > 0) {
      sum += cr.ap50;
      ++scored;
    }
    report.classes.push_back(std::move(cr));
  }
  report.mean_ap50 = scored > 0 ? sum / scored : 0.0;
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : r.classes) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& p : c.curve) curve.push_back({p.recall, p.precision});
    classes.push_back({{"class", c.class_id}, {"truths", c.truths}, {"tp", c.tp}, {"fp", c.fp},
                       {"ap50", c.ap50}, {"pr_curve", curve}});
  }
  return {{"mean_ap50", r.mean_ap50}, {"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"classes", classes}};
}

}  // namespace geoshift
