#include "geoshift/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "geoshift/error.hpp"
#include "geoshift/random.hpp"

namespace geoshift {

namespace {

struct ParamRef {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

std::vector<ParamRef> learnable(GeoDetector& model, const std::function<bool(const std::string&)>& keep) {
  std::vector<ParamRef> out;
  model.visit_state([&](const std::string& name, Tensor& value, Tensor* grad) {
    if (grad && keep(name)) out.push_back({name, &value, grad});
  });
  return out;
}

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// SGD with momentum; weight decay applies to conv weights only.
class Sgd {
 public:
  Sgd(std::vector<ParamRef> params, double momentum, double weight_decay)
      : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    for (const auto& p : params_) velocity_.emplace_back(p.value->size(), 0.0);
  }

  void step(double lr) {
    for (size_t i = 0; i < params_.size(); ++i) {
      auto value = params_[i].value->values();
      auto grad = params_[i].grad->values();
      const double wd = ends_with(params_[i].name, ".weight") ? weight_decay_ : 0.0;
      auto& v = velocity_[i];
      for (size_t k = 0; k < value.size(); ++k) {
        v[k] = momentum_ * v[k] + grad[k] + wd * value[k];
        value[k] -= lr * v[k];
      }
    }
  }

 private:
  std::vector<ParamRef> params_;
  double momentum_, weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

class Adam {
 public:
  explicit Adam(size_t size, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : m_(size, 0.0), v_(size, 0.0), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(std::span<double> value, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    for (size_t k = 0; k < value.size(); ++k) {
      m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
      v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
      value[k] -= lr * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
    }
  }

 private:
  std::vector<double> m_, v_;
  double beta1_, beta2_, eps_;
  int t_ = 0;
};

// Epoch-wise shuffled index stream.
class BatchSampler {
 public:
  BatchSampler(int size, uint64_t seed) : order_(size), rng_(seed) {
    if (size <= 0) throw Error(Errc::configuration, "cannot sample batches from an empty split");
    std::iota(order_.begin(), order_.end(), 0);
    shuffle();
  }

  std::vector<int> next(int count) {
    std::vector<int> out;
    out.reserve(count);
    while (static_cast<int>(out.size()) < count) {
      if (pos_ == order_.size()) shuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void shuffle() {
    for (int i = static_cast<int>(order_.size()) - 1; i > 0; --i) std::swap(order_[i], order_[uniform_int(rng_, 0, i)]);
    pos_ = 0;
  }

  std::vector<int> order_;
  std::mt19937_64 rng_;
  size_t pos_ = 0;
};

std::vector<int> all_indices(const std::vector<DomainSample>& samples) {
  std::vector<int> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<std::vector<Annotation>> source_labels(const std::vector<DomainSample>& samples) {
  std::vector<std::vector<Annotation>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.annotations) throw Error(Errc::invalid_target, "labeled split sample '" + s.file + "' has no annotations");
    out.push_back(*s.annotations);
  }
  return out;
}

Tensor gather(const Tensor& all, const std::vector<int>& idx) {
  Tensor out(static_cast<int>(idx.size()), all.c(), all.h(), all.w());
  for (size_t i = 0; i < idx.size(); ++i)
    std::copy_n(all.sample(idx[i]), all.sample_size(), out.sample(static_cast<int>(i)));
  return out;
}

void flip_horizontal(Tensor& images, int n, std::vector<Annotation>& labels) {
  const int w = images.w();
  for (int c = 0; c < images.c(); ++c)
    for (int y = 0; y < images.h(); ++y) {
      double* row = images.plane(n, c) + static_cast<size_t>(y) * w;
      std::reverse(row, row + w);
    }
  for (auto& a : labels) {
    const double x0 = w - a.box.x_max, x1 = w - a.box.x_min;
    a.box.x_min = x0;
    a.box.x_max = x1;
  }
}

// Zooms into a random square window of side scale * size and resamples it to
// the full frame. Boxes keeping less than half their area are dropped.
void random_crop(Tensor& images, int n, std::vector<Annotation>& labels, double scale, std::mt19937_64& rng) {
  const int h = images.h(), w = images.w();
  const double ox = uniform(rng, 0.0, w * (1.0 - scale));
  const double oy = uniform(rng, 0.0, h * (1.0 - scale));
  Tensor src = images.slice(n, 1);
  for (int c = 0; c < images.c(); ++c) {
    const double* in = src.plane(0, c);
    double* out = images.plane(n, c);
    for (int y = 0; y < h; ++y) {
      const double sy = std::clamp(oy + (y + 0.5) * scale - 0.5, 0.0, h - 1.0);
      const int y0 = std::min(static_cast<int>(sy), h - 2);
      const double fy = sy - y0;
      for (int x = 0; x < w; ++x) {
        const double sx = std::clamp(ox + (x + 0.5) * scale - 0.5, 0.0, w - 1.0);
        const int x0 = std::min(static_cast<int>(sx), w - 2);
        const double fx = sx - x0;
        const double* r0 = in + static_cast<size_t>(y0) * w;
        const double* r1 = r0 + w;
        out[static_cast<size_t>(y) * w + x] = (1 - fy) * ((1 - fx) * r0[x0] + fx * r0[x0 + 1]) +
                                              fy * ((1 - fx) * r1[x0] + fx * r1[x0 + 1]);
      }
    }
  }
  std::vector<Annotation> kept;
  for (const auto& a : labels) {
    Box b{(a.box.x_min - ox) / scale, (a.box.y_min - oy) / scale, (a.box.x_max - ox) / scale,
          (a.box.y_max - oy) / scale};
    const double full = b.area();
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(w));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(w));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(h));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(h));
    if (b.width() >= 1.0 && b.height() >= 1.0 && b.area() >= 0.5 * full) kept.push_back({b, a.class_id});
  }
  labels = std::move(kept);
}

nlohmann::json transforms_json(const HomographySet& set) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& p : set) out.push_back({p.sx, p.sy, p.lx, p.ly});
  return out;
}

void clamp_scales(HomographySet& set, double lo, double hi) {
  for (auto& p : set) {
    p.sx = std::clamp(p.sx, lo, hi);
    p.sy = std::clamp(p.sy, lo, hi);
  }
}

}  // namespace

void SamplingRanges::validate() const {
  if (!(scale_min > 0.0) || !(scale_max >= scale_min))
    throw Error(Errc::configuration, "scale range must satisfy 0 < min <= max");
  if (!(perspective_max >= perspective_min))
    throw Error(Errc::configuration, "perspective range must satisfy min <= max");
}

HomographySet sample_homography_set(int n, const SamplingRanges& ranges, std::mt19937_64& rng) {
  if (n < 1) throw Error(Errc::configuration, "homography set size must be at least 1");
  ranges.validate();
  HomographySet set(n);
  for (auto& p : set) {
    p.sx = uniform(rng, ranges.scale_min, ranges.scale_max);
    p.sy = uniform(rng, ranges.scale_min, ranges.scale_max);
    p.lx = uniform(rng, ranges.perspective_min, ranges.perspective_max);
    p.ly = uniform(rng, ranges.perspective_min, ranges.perspective_max);
  }
  return set;
}

EvalReport evaluate(GeoDetector& model, const std::vector<DomainSample>& samples, const EvalOptions& options) {
  std::vector<std::vector<Detection>> predictions;
  predictions.reserve(samples.size());
  constexpr int kChunk = 32;
  for (size_t begin = 0; begin < samples.size(); begin += kChunk) {
    std::vector<int> idx;
    for (size_t k = begin; k < std::min(samples.size(), begin + kChunk); ++k) idx.push_back(static_cast<int>(k));
    auto part = model.predict(to_tensor(samples, idx), options.score_threshold, options.nms_iou);
    for (auto& p : part) predictions.push_back(std::move(p));
  }
  return ap50(predictions, truths_of(samples));
}

void BaseTrainConfig::validate() const {
  if (steps < 0 || batch_size < 1) throw Error(Errc::configuration, "base training needs steps >= 0 and batch >= 1");
  if (!(learning_rate > 0.0)) throw Error(Errc::configuration, "learning rate must be positive");
  if (!(crop_min_scale > 0.0 && crop_min_scale <= 1.0))
    throw Error(Errc::configuration, "crop_min_scale must lie in (0, 1]");
}

void AggregatorTrainConfig::validate() const {
  if (steps < 0 || batch_size < 1) throw Error(Errc::configuration, "aggregator training needs steps >= 0 and batch >= 1");
  if (num_transforms < 1) throw Error(Errc::configuration, "num_transforms must be at least 1");
  if (kind == AggregatorKind::none && num_transforms != 1)
    throw Error(Errc::configuration, "aggregator kind 'none' supports exactly one homography");
  if (!(learning_rate > 0.0)) throw Error(Errc::configuration, "learning rate must be positive");
  ranges.validate();
}

std::string to_string(AdaptMode m) { return m == AdaptMode::full ? "full" : "transforms_only"; }

AdaptMode adapt_mode_from_string(const std::string& s) {
  if (s == "full") return AdaptMode::full;
  if (s == "transforms_only") return AdaptMode::transforms_only;
  throw Error(Errc::configuration, "unknown adaptation mode '" + s + "'");
}

std::string to_string(TransformInit t) {
  switch (t) {
    case TransformInit::random: return "random";
    case TransformInit::identity: return "identity";
    case TransformInit::keep: return "keep";
  }
  return "random";
}

TransformInit transform_init_from_string(const std::string& s) {
  if (s == "random") return TransformInit::random;
  if (s == "identity") return TransformInit::identity;
  if (s == "keep") return TransformInit::keep;
  throw Error(Errc::configuration, "unknown transform init '" + s + "'");
}

void AdaptConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(Errc::configuration, "lambda must be finite and >= 0");
  if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::configuration, "tau must lie in (0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::configuration, "alpha must lie in [0, 1]");
  if (steps < 0 || warmup_steps < 0) throw Error(Errc::configuration, "steps and warmup_steps must be >= 0");
  if (source_batch < 1 || target_batch < 1) throw Error(Errc::configuration, "batch sizes must be >= 1");
  if (!(lr_transforms >= 0.0) || !(lr_network >= 0.0)) throw Error(Errc::configuration, "learning rates must be >= 0");
  if (!(scale_clamp_min > 0.0 && scale_clamp_max >= scale_clamp_min))
    throw Error(Errc::configuration, "scale clamp must satisfy 0 < min <= max");
  if (color_jitter < 0.0) throw Error(Errc::configuration, "color_jitter must be >= 0");
  if (eval_every < 0) throw Error(Errc::configuration, "eval_every must be >= 0");
  ranges.validate();
}

void color_jitter(Tensor& images, double strength, std::mt19937_64& rng) {
  if (strength <= 0.0) return;
  const size_t plane = static_cast<size_t>(images.h()) * images.w();
  for (int n = 0; n < images.n(); ++n) {
    const double brightness = uniform(rng, -strength, strength) * 0.5;
    const double contrast = 1.0 + uniform(rng, -strength, strength);
    const double saturation = 1.0 + uniform(rng, -strength, strength);
    double* r = images.plane(n, 0);
    double* g = images.plane(n, 1);
    double* b = images.plane(n, 2);
    double mean = 0.0;
    for (size_t k = 0; k < plane; ++k) mean += (r[k] + g[k] + b[k]) / 3.0;
    mean /= static_cast<double>(plane);
    for (size_t k = 0; k < plane; ++k) {
      const double gray = (r[k] + g[k] + b[k]) / 3.0;
      for (double* ch : {r, g, b}) {
        double v = gray + saturation * (ch[k] - gray);
        v = mean + contrast * (v - mean) + brightness;
        ch[k] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
}

TrainOutcome train_base(const std::vector<DomainSample>& source_train, const std::vector<DomainSample>& source_val,
                        const DetectorConfig& detector, const BaseTrainConfig& config, uint64_t seed,
                        const TraceSink& trace) {
  config.validate();
  GeoDetector model(detector, derive_seed(seed, {1}));
  const auto labels = source_labels(source_train);
  const Tensor images = to_tensor(source_train, all_indices(source_train));
  if (!source_train.empty() && images.h() != detector.image_size)
    throw Error(Errc::configuration, "dataset image size does not match the detector configuration");

  Sgd sgd(learnable(model, [](const std::string&) { return true; }), config.momentum, config.weight_decay);
  BatchSampler sampler(static_cast<int>(source_train.size()), derive_seed(seed, {2}));
  std::mt19937_64 aug(derive_seed(seed, {3}));
  const int drop_at = static_cast<int>(config.lr_drop_fraction * config.steps);

  for (int step = 0; step < config.steps; ++step) {
    const auto idx = sampler.next(config.batch_size);
    Tensor batch = gather(images, idx);
    std::vector<std::vector<Annotation>> targets;
    for (size_t i = 0; i < idx.size(); ++i) {
      auto t = labels[idx[i]];
      const int n = static_cast<int>(i);
      if (config.flip && uniform(aug, 0.0, 1.0) < 0.5) flip_horizontal(batch, n, t);
      if (config.crop_min_scale < 1.0) {
        const double s = uniform(aug, config.crop_min_scale, 1.0);
        if (s < 1.0) random_crop(batch, n, t, s, aug);
      }
      targets.push_back(std::move(t));
    }
    const Tensor out = model.forward(batch, {nn::Mode::train, nn::Mode::eval});
    Tensor grad(out.n(), out.c(), out.h(), out.w());
    const auto loss = detection_loss(out, 0, targets, LossMode::source, model.layout(), batch.h(), batch.w(), &grad);
    model.zero_grad();
    model.backward(grad, {.backbone = true, .head = true});
    const double lr = step < drop_at ? config.learning_rate : config.learning_rate * 0.1;
    sgd.step(lr);
    if (trace) trace({{"step", step}, {"loss_cls", loss.cls}, {"loss_reg", loss.reg}, {"lr", lr}});
  }

  nlohmann::json metrics{{"steps", config.steps}};
  if (!source_val.empty()) metrics["source_val_ap50"] = evaluate(model, source_val).mean_ap50;
  return {std::move(model), std::move(metrics)};
}

TrainOutcome train_aggregator(const GeoDetector& base, const std::vector<DomainSample>& source_train,
                              const std::vector<DomainSample>& source_val, const AggregatorTrainConfig& config,
                              uint64_t seed, const TraceSink& trace) {
  config.validate();
  GeoDetector model = base;
  model.detach_transforms();
  std::mt19937_64 draws(derive_seed(seed, {11}));
  model.attach_transforms(sample_homography_set(config.num_transforms, config.ranges, draws), config.kind,
                          derive_seed(seed, {12}));

  nlohmann::json metrics{{"steps", 0}, {"kind", config.kind == AggregatorKind::learned ? "learned" : "fixed"}};
  if (config.kind == AggregatorKind::learned) {
    const auto labels = source_labels(source_train);
    const Tensor images = to_tensor(source_train, all_indices(source_train));
    Sgd sgd(learnable(model, [](const std::string& n) { return starts_with(n, "aggregator."); }), config.momentum,
            config.weight_decay);
    BatchSampler sampler(static_cast<int>(source_train.size()), derive_seed(seed, {13}));
    for (int step = 0; step < config.steps; ++step) {
      model.transforms = sample_homography_set(config.num_transforms, config.ranges, draws);
      const auto idx = sampler.next(config.batch_size);
      const Tensor batch = gather(images, idx);
      std::vector<std::vector<Annotation>> targets;
      for (int i : idx) targets.push_back(labels[i]);
      const Tensor out = model.forward(batch, {nn::Mode::eval, nn::Mode::train});
      Tensor grad(out.n(), out.c(), out.h(), out.w());
      const auto loss = detection_loss(out, 0, targets, LossMode::source, model.layout(), batch.h(), batch.w(), &grad);
      model.zero_grad();
      model.backward(grad, {.aggregator = true});
      sgd.step(config.learning_rate);
      if (trace) trace({{"step", step}, {"loss_cls", loss.cls}, {"loss_reg", loss.reg}});
    }
    metrics["steps"] = config.steps;
  }

  // Fixed evaluation set, drawn independently of the training stream.
  std::mt19937_64 eval_draw(derive_seed(seed, {14}));
  model.transforms = sample_homography_set(config.num_transforms, config.ranges, eval_draw);
  if (!source_val.empty()) metrics["source_val_ap50"] = evaluate(model, source_val).mean_ap50;
  return {std::move(model), std::move(metrics)};
}

void ema_update(TeacherStudentState& state) {
  const double a = state.alpha;
  std::vector<Tensor*> student;
  state.student.visit_state([&](const std::string&, Tensor& v, Tensor*) { student.push_back(&v); });
  size_t i = 0;
  state.teacher.visit_state([&](const std::string& name, Tensor& v, Tensor*) {
    if (i >= student.size() || !student[i]->same_shape(v))
      throw Error(Errc::shape, "teacher and student disagree at '" + name + "'");
    auto t = v.values();
    auto s = student[i++]->values();
    for (size_t k = 0; k < t.size(); ++k)
      if (t[k] != s[k]) t[k] = a * t[k] + (1.0 - a) * s[k];
  });
  if (i != student.size()) throw Error(Errc::shape, "teacher and student have different state layouts");

  auto& tt = state.teacher.transforms;
  const auto& st = state.student.transforms;
  if (tt.size() != st.size()) throw Error(Errc::shape, "teacher and student homography counts differ");
  for (size_t k = 0; k < tt.size(); ++k) {
    auto t = tt[k].to_array();
    const auto s = st[k].to_array();
    for (int j = 0; j < 4; ++j)
      if (t[j] != s[j]) t[j] = a * t[j] + (1.0 - a) * s[j];
    tt[k] = HomographyParams::from_array(t);
  }
}

PseudoLabelBatch generate_pseudo_labels(GeoDetector& teacher, const Tensor& images, double tau, double nms_iou,
                                        int64_t teacher_step) {
  PseudoLabelBatch batch;
  batch.tau = tau;
  batch.teacher_step = teacher_step;
  batch.detections = teacher.predict(images, tau, nms_iou);
  for (const auto& dets : batch.detections) {
    std::vector<Annotation> labels;
    for (const auto& d : dets)
      if (d.score >= tau) labels.push_back({d.box, d.class_id});
    batch.labels.push_back(std::move(labels));
  }
  return batch;
}

AdaptOutcome adapt(const GeoDetector& initial, const std::vector<DomainSample>& source_train,
                   const std::vector<DomainSample>& target_train, const std::vector<DomainSample>& target_val,
                   const AdaptConfig& config, uint64_t seed, const TraceSink& trace) {
  config.validate();
  GeoDetector student = initial;
  if (student.uses_transforms()) {
    std::mt19937_64 init_rng(derive_seed(seed, {21}));
    const int n = static_cast<int>(student.transforms.size());
    if (config.init == TransformInit::random) student.transforms = sample_homography_set(n, config.ranges, init_rng);
    if (config.init == TransformInit::identity) student.transforms.assign(n, HomographyParams::identity());
    clamp_scales(student.transforms, config.scale_clamp_min, config.scale_clamp_max);
  }
  TeacherStudentState state{student, student, config.alpha, 0, config.warmup_steps};

  const auto labels = source_labels(source_train);
  const Tensor source_images = to_tensor(source_train, all_indices(source_train));
  const Tensor target_images = to_tensor(target_train, all_indices(target_train));
  BatchSampler source_sampler(static_cast<int>(source_train.size()), derive_seed(seed, {22}));
  BatchSampler target_sampler(static_cast<int>(target_train.size()), derive_seed(seed, {23}));
  std::mt19937_64 jitter(derive_seed(seed, {24}));

  GeoDetector& s = state.student;
  const bool learned_aggregator = s.kind == AggregatorKind::learned;
  Sgd sgd(learnable(s, [](const std::string&) { return true; }), config.momentum, 0.0);
  Adam adam(s.transforms.size() * 4);
  const bool has_transforms = s.uses_transforms();

  nlohmann::json history = nlohmann::json::array();
  for (int step = 0; step < config.steps; ++step) {
    const bool network = config.mode == AdaptMode::full && step >= config.warmup_steps;
    const GradientFlags flags{.backbone = network, .head = network, .aggregator = network && learned_aggregator,
                              .transforms = has_transforms};
    const ForwardModes modes{nn::Mode::eval, flags.aggregator ? nn::Mode::train : nn::Mode::eval};
    s.zero_grad();

    const auto sidx = source_sampler.next(config.source_batch);
    Tensor sbatch = gather(source_images, sidx);
    color_jitter(sbatch, config.color_jitter, jitter);
    std::vector<std::vector<Annotation>> stargets;
    for (int i : sidx) stargets.push_back(labels[i]);
    const Tensor sout = s.forward(sbatch, modes);
    Tensor sgrad(sout.n(), sout.c(), sout.h(), sout.w());
    const auto sloss = detection_loss(sout, 0, stargets, LossMode::source, s.layout(), sbatch.h(), sbatch.w(),
                                      flags.any() ? &sgrad : nullptr);
    s.backward(sgrad, flags);

    LossBreakdown tloss;
    size_t pseudo_count = 0;
    if (config.lambda > 0.0) {
      const auto tidx = target_sampler.next(config.target_batch);
      const Tensor clean = gather(target_images, tidx);
      const auto pseudo = generate_pseudo_labels(state.teacher, clean, config.tau, config.nms_iou, state.step);
      for (const auto& l : pseudo.labels) pseudo_count += l.size();
      Tensor tbatch = clean;
      color_jitter(tbatch, config.color_jitter, jitter);
      const Tensor tout = s.forward(tbatch, modes);
      Tensor tgrad(tout.n(), tout.c(), tout.h(), tout.w());
      tloss = detection_loss(tout, 0, pseudo.labels, LossMode::target, s.layout(), tbatch.h(), tbatch.w(),
                             flags.any() ? &tgrad : nullptr, config.lambda);
      s.backward(tgrad, flags);
    }

    if (network) sgd.step(config.lr_network);
    if (has_transforms && config.lr_transforms > 0.0) {
      std::vector<double> values, grads;
      for (size_t k = 0; k < s.transforms.size(); ++k) {
        const auto v = s.transforms[k].to_array();
        values.insert(values.end(), v.begin(), v.end());
        grads.insert(grads.end(), s.transform_grad[k].begin(), s.transform_grad[k].end());
      }
      adam.step(values, grads, config.lr_transforms);
      for (size_t k = 0; k < s.transforms.size(); ++k)
        s.transforms[k] = HomographyParams::from_array(std::span<const double, 4>(values.data() + 4 * k, 4));
      clamp_scales(s.transforms, config.scale_clamp_min, config.scale_clamp_max);
    }
    ++state.step;
    ema_update(state);

    nlohmann::json record{{"step", step},
                          {"loss_src_cls", sloss.cls},
                          {"loss_src_reg", sloss.reg},
                          {"loss_tgt_cls", tloss.cls},
                          {"lambda", config.lambda},
                          {"tau", config.tau},
                          {"pseudo_labels", pseudo_count},
                          {"T_st", transforms_json(s.transforms)}};
    if (config.eval_every > 0 && (step + 1) % config.eval_every == 0 && !target_val.empty()) {
      record["target_ap"] = evaluate(state.teacher, target_val).mean_ap50;
      history.push_back({{"step", step}, {"target_ap", record["target_ap"]}});
    }
    if (trace) trace(record);
  }

  nlohmann::json metrics{{"steps", config.steps}, {"history", history},
                         {"transforms", transforms_json(state.teacher.transforms)}};
  if (!target_val.empty()) {
    metrics["teacher_target_ap50"] = evaluate(state.teacher, target_val).mean_ap50;
    metrics["student_target_ap50"] = evaluate(state.student, target_val).mean_ap50;
  }
  return {std::move(state.student), std::move(state.teacher), std::move(metrics)};
}

}  // namespace geoshift
