#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <random>
#include <vector>

#include "geoshift/evaluation.hpp"
#include "geoshift/model.hpp"
#include "geoshift/synth.hpp"

namespace geoshift {

struct SamplingRanges {
  double scale_min = 0.5;
  double scale_max = 2.0;
  double perspective_min = -0.5;
  double perspective_max = 0.5;

  void validate() const;
};

/// n independent draws: sx, sy ~ U[scale_min, scale_max],
/// lx, ly ~ U[perspective_min, perspective_max].
HomographySet sample_homography_set(int n, const SamplingRanges& ranges, std::mt19937_64& rng);

struct EvalOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
};

EvalReport evaluate(GeoDetector& model, const std::vector<DomainSample>& samples, const EvalOptions& options = {});

struct BaseTrainConfig {
  int steps = 1500;
  int batch_size = 8;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lr_drop_fraction = 0.75;  // lr x0.1 after this fraction of the steps
  bool flip = true;
  double crop_min_scale = 0.6;  // random crop side in [crop_min_scale, 1] of the image; 1 disables

  void validate() const;
};

struct AggregatorTrainConfig {
  int steps = 1500;
  int batch_size = 4;
  int num_transforms = 5;
  AggregatorKind kind = AggregatorKind::learned;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  SamplingRanges ranges;

  void validate() const;
};

enum class AdaptMode { full, transforms_only };
enum class TransformInit { random, identity, keep };

std::string to_string(AdaptMode m);
AdaptMode adapt_mode_from_string(const std::string& s);
std::string to_string(TransformInit t);
TransformInit transform_init_from_string(const std::string& s);

struct AdaptConfig {
  int steps = 800;
  int warmup_steps = 200;  // only the homographies learn during warmup
  int source_batch = 2;
  int target_batch = 2;
  double tau = 0.6;
  double lambda = 0.1;
  double alpha = 0.99;
  double nms_iou = 0.5;
  double lr_transforms = 1e-3;  // Adam
  double lr_network = 3e-3;     // SGD with momentum
  double momentum = 0.9;
  AdaptMode mode = AdaptMode::full;
  TransformInit init = TransformInit::random;  // the set size is taken from the model
  SamplingRanges ranges;
  double color_jitter = 0.2;
  double scale_clamp_min = 0.1;
  double scale_clamp_max = 10.0;
  int eval_every = 200;  // 0 disables periodic target AP

  void validate() const;
};

using TraceSink = std::function<void(const nlohmann::json&)>;

struct TrainOutcome {
  GeoDetector model;
  nlohmann::json metrics;
};

/// Source-only detector: backbone + head trained on the source labels with
/// flip/crop augmentation. metrics carries the final source-val AP@0.5.
TrainOutcome train_base(const std::vector<DomainSample>& source_train, const std::vector<DomainSample>& source_val,
                        const DetectorConfig& detector, const BaseTrainConfig& config, uint64_t seed,
                        const TraceSink& trace = {});

/// Adds an aggregator to a trained base and fits only the aggregator on
/// source data, drawing a fresh random homography set every iteration.
TrainOutcome train_aggregator(const GeoDetector& base, const std::vector<DomainSample>& source_train,
                              const std::vector<DomainSample>& source_val, const AggregatorTrainConfig& config,
                              uint64_t seed, const TraceSink& trace = {});

struct TeacherStudentState {
  GeoDetector student;
  GeoDetector teacher;
  double alpha = 0.99;
  int64_t step = 0;
  int warmup_steps = 0;
};

/// teacher <- alpha * teacher + (1 - alpha) * student for every network
/// tensor (including batch-norm statistics) and every homography parameter.
/// Entries that already agree are left untouched.
void ema_update(TeacherStudentState& state);

struct PseudoLabelBatch {
  std::vector<std::vector<Annotation>> labels;
  std::vector<std::vector<Detection>> detections;
  int64_t teacher_step = 0;
  double tau = 0.0;
};

/// Teacher inference in eval mode; keeps detections with score >= tau that
/// survive NMS.
PseudoLabelBatch generate_pseudo_labels(GeoDetector& teacher, const Tensor& images, double tau, double nms_iou,
                                        int64_t teacher_step = 0);

struct AdaptOutcome {
  GeoDetector student;
  GeoDetector teacher;
  nlohmann::json metrics;
};

/// Mean-teacher adaptation. Student loss per step:
///   source cls + reg  +  lambda * target cls (against teacher pseudo-labels).
/// Only `image` of target_train samples is read. If the model carries
/// homographies they are initialized per config.init and optimized with
/// Adam; networks use SGD after warmup in full mode and stay frozen in
/// transforms_only mode. Each step emits one trace record.
AdaptOutcome adapt(const GeoDetector& initial, const std::vector<DomainSample>& source_train,
                   const std::vector<DomainSample>& target_train, const std::vector<DomainSample>& target_val,
                   const AdaptConfig& config, uint64_t seed, const TraceSink& trace = {});

/// Per-image photometric jitter (brightness, contrast, saturation).
void color_jitter(Tensor& images, double strength, std::mt19937_64& rng);

}  // namespace geoshift
