#include "geoshift/config.hpp"

#include <fstream>
#include <sstream>

#include "geoshift/checkpoint.hpp"
#include "geoshift/error.hpp"
#include "geoshift/serialize.hpp"

namespace geoshift {

using nlohmann::json;

namespace {

json ranges_to_json(const SamplingRanges& r) {
  return {{"scale_min", r.scale_min},
          {"scale_max", r.scale_max},
          {"perspective_min", r.perspective_min},
          {"perspective_max", r.perspective_max}};
}

SamplingRanges ranges_from_json(const json& j) {
  return {j.at("scale_min").get<double>(), j.at("scale_max").get<double>(), j.at("perspective_min").get<double>(),
          j.at("perspective_max").get<double>()};
}

json fov_to_json(const FieldOfView& f) { return json::array({f.x_deg, f.y_deg}); }
FieldOfView fov_from_json(const json& j) {
  if (!j.is_array() || j.size() != 2) throw Error(Errc::schema, "field of view must be [x_deg, y_deg]");
  return {j[0].get<double>(), j[1].get<double>()};
}

const char* kind_name(const json& j) {
  if (j.is_object()) return "object";
  if (j.is_array()) return "array";
  if (j.is_string()) return "string";
  if (j.is_boolean()) return "boolean";
  if (j.is_number()) return "number";
  return "null";
}

void merge_into(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) throw Error(Errc::schema, (path.empty() ? "config" : path) + ": expected an object");
  for (const auto& [key, value] : overlay.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw Error(Errc::schema, here + ": unknown key");
    json& slot = base[key];
    if (std::string(kind_name(slot)) != kind_name(value))
      throw Error(Errc::schema, here + ": expected " + kind_name(slot) + ", got " + kind_name(value));
    if (slot.is_object())
      merge_into(slot, value, here);
    else
      slot = value;
  }
}

}  // namespace

DenseMapping FitSettings::dense_mapping() const {
  if (mapping == "fov") return spherical_fov_mapping(src_fov, dst_fov);
  if (mapping == "viewpoint") return viewpoint_tilt_mapping(pitch_deg, zoom, src_fov);
  throw Error(Errc::configuration, "fit.mapping must be fov or viewpoint, got " + mapping);
}

SceneSpec ExperimentConfig::seeded_scene() const {
  SceneSpec s = scene;
  s.seed = seed;
  return s;
}

json to_json(const ExperimentConfig& c) {
  json scene = c.scene;
  scene.erase("seed");
  return {
      {"seed", c.seed},
      {"output_dir", c.output_dir},
      {"scene", scene},
      {"shift", c.shift},
      {"counts", c.counts},
      {"detector", detector_config_to_json(c.detector)},
      {"base",
       {{"steps", c.base.steps},
        {"batch_size", c.base.batch_size},
        {"learning_rate", c.base.learning_rate},
        {"momentum", c.base.momentum},
        {"weight_decay", c.base.weight_decay},
        {"lr_drop_fraction", c.base.lr_drop_fraction},
        {"flip", c.base.flip},
        {"crop_min_scale", c.base.crop_min_scale}}},
      {"aggregator",
       {{"steps", c.aggregator.steps},
        {"batch_size", c.aggregator.batch_size},
        {"num_transforms", c.aggregator.num_transforms},
        {"kind", to_string(c.aggregator.kind)},
        {"learning_rate", c.aggregator.learning_rate},
        {"momentum", c.aggregator.momentum},
        {"weight_decay", c.aggregator.weight_decay},
        {"ranges", ranges_to_json(c.aggregator.ranges)}}},
      {"adapt",
       {{"steps", c.adapt.steps},
        {"warmup_steps", c.adapt.warmup_steps},
        {"source_batch", c.adapt.source_batch},
        {"target_batch", c.adapt.target_batch},
        {"tau", c.adapt.tau},
        {"lambda", c.adapt.lambda},
        {"alpha", c.adapt.alpha},
        {"nms_iou", c.adapt.nms_iou},
        {"lr_transforms", c.adapt.lr_transforms},
        {"lr_network", c.adapt.lr_network},
        {"momentum", c.adapt.momentum},
        {"mode", to_string(c.adapt.mode)},
        {"init", to_string(c.adapt.init)},
        {"ranges", ranges_to_json(c.adapt.ranges)},
        {"color_jitter", c.adapt.color_jitter},
        {"scale_clamp_min", c.adapt.scale_clamp_min},
        {"scale_clamp_max", c.adapt.scale_clamp_max},
        {"eval_every", c.adapt.eval_every}}},
      {"eval", {{"score_threshold", c.eval.score_threshold}, {"nms_iou", c.eval.nms_iou}}},
      {"fit",
       {{"mapping", c.fit.mapping},
        {"src_fov", fov_to_json(c.fit.src_fov)},
        {"dst_fov", fov_to_json(c.fit.dst_fov)},
        {"pitch_deg", c.fit.pitch_deg},
        {"zoom", c.fit.zoom},
        {"n", c.fit.n},
        {"grid", {c.fit.grid_rows, c.fit.grid_cols}},
        {"rounds", c.fit.solver.rounds},
        {"steps", c.fit.solver.steps},
        {"tolerance_px", c.fit.solver.tolerance_px},
        {"reference_resolution", c.fit.solver.reference_resolution}}},
      {"sweep", {{"param", c.sweep.param}, {"values", c.sweep.values}, {"seeds", c.sweep.seeds}}},
  };
}

ExperimentConfig experiment_config_from_json(const json& t) {
  ExperimentConfig c;
  try {
    c.seed = t.at("seed").get<uint64_t>();
    c.output_dir = t.at("output_dir").get<std::string>();
    json scene = t.at("scene");
    scene["seed"] = c.seed;
    c.scene = scene.get<SceneSpec>();
    c.shift = t.at("shift").get<ShiftSpec>();
    c.counts = t.at("counts").get<SplitCounts>();
    c.detector = detector_config_from_json(t.at("detector"));

    const json& b = t.at("base");
    c.base.steps = b.at("steps").get<int>();
    c.base.batch_size = b.at("batch_size").get<int>();
    c.base.learning_rate = b.at("learning_rate").get<double>();
    c.base.momentum = b.at("momentum").get<double>();
    c.base.weight_decay = b.at("weight_decay").get<double>();
    c.base.lr_drop_fraction = b.at("lr_drop_fraction").get<double>();
    c.base.flip = b.at("flip").get<bool>();
    c.base.crop_min_scale = b.at("crop_min_scale").get<double>();

    const json& g = t.at("aggregator");
    c.aggregator.steps = g.at("steps").get<int>();
    c.aggregator.batch_size = g.at("batch_size").get<int>();
    c.aggregator.num_transforms = g.at("num_transforms").get<int>();
    c.aggregator.kind = aggregator_kind_from_string(g.at("kind").get<std::string>());
    c.aggregator.learning_rate = g.at("learning_rate").get<double>();
    c.aggregator.momentum = g.at("momentum").get<double>();
    c.aggregator.weight_decay = g.at("weight_decay").get<double>();
    c.aggregator.ranges = ranges_from_json(g.at("ranges"));

    const json& a = t.at("adapt");
    c.adapt.steps = a.at("steps").get<int>();
    c.adapt.warmup_steps = a.at("warmup_steps").get<int>();
    c.adapt.source_batch = a.at("source_batch").get<int>();
    c.adapt.target_batch = a.at("target_batch").get<int>();
    c.adapt.tau = a.at("tau").get<double>();
    c.adapt.lambda = a.at("lambda").get<double>();
    c.adapt.alpha = a.at("alpha").get<double>();
    c.adapt.nms_iou = a.at("nms_iou").get<double>();
    c.adapt.lr_transforms = a.at("lr_transforms").get<double>();
    c.adapt.lr_network = a.at("lr_network").get<double>();
    c.adapt.momentum = a.at("momentum").get<double>();
    c.adapt.mode = adapt_mode_from_string(a.at("mode").get<std::string>());
    c.adapt.init = transform_init_from_string(a.at("init").get<std::string>());
    c.adapt.ranges = ranges_from_json(a.at("ranges"));
    c.adapt.color_jitter = a.at("color_jitter").get<double>();
    c.adapt.scale_clamp_min = a.at("scale_clamp_min").get<double>();
    c.adapt.scale_clamp_max = a.at("scale_clamp_max").get<double>();
    c.adapt.eval_every = a.at("eval_every").get<int>();

    const json& e = t.at("eval");
    c.eval.score_threshold = e.at("score_threshold").get<double>();
    c.eval.nms_iou = e.at("nms_iou").get<double>();

    const json& f = t.at("fit");
    c.fit.mapping = f.at("mapping").get<std::string>();
    c.fit.src_fov = fov_from_json(f.at("src_fov"));
    c.fit.dst_fov = fov_from_json(f.at("dst_fov"));
    c.fit.pitch_deg = f.at("pitch_deg").get<double>();
    c.fit.zoom = f.at("zoom").get<double>();
    c.fit.n = f.at("n").get<int>();
    c.fit.grid_rows = f.at("grid").at(0).get<int>();
    c.fit.grid_cols = f.at("grid").at(1).get<int>();
    c.fit.solver.rounds = f.at("rounds").get<int>();
    c.fit.solver.steps = f.at("steps").get<int>();
    c.fit.solver.tolerance_px = f.at("tolerance_px").get<double>();
    c.fit.solver.reference_resolution = f.at("reference_resolution").get<double>();

    const json& s = t.at("sweep");
    c.sweep.param = s.at("param").get<std::string>();
    c.sweep.values = s.at("values").get<std::vector<double>>();
    c.sweep.seeds = s.at("seeds").get<std::vector<uint64_t>>();
  } catch (const json::exception& ex) {
    throw Error(Errc::schema, std::string("config: ") + ex.what());
  }
  c.scene.validate();
  c.shift.validate();
  c.detector.backbone.validate();
  c.base.validate();
  c.aggregator.validate();
  c.adapt.validate();
  if (c.sweep.param != "N" && c.sweep.param != "lambda" && c.sweep.param != "tau")
    throw Error(Errc::configuration, "sweep.param must be N, lambda or tau");
  return c;
}

json default_config_tree() { return to_json(ExperimentConfig{}); }

json merge_config(const json& base, const json& overlay) {
  json out = base;
  merge_into(out, overlay, "");
  return out;
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error(Errc::schema, "override must be key=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  if (key.back() == '.') parts.emplace_back();
  json overlay = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw Error(Errc::schema, "empty path segment in " + key);
    overlay = json{{*it, overlay}};
  }
  merge_into(tree, overlay, "");
}

json load_config_tree(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  json tree = default_config_tree();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error(Errc::io, "cannot read config " + file.string());
    json loaded = json::parse(in, nullptr, false);
    if (loaded.is_discarded()) throw Error(Errc::schema, file.string() + ": not valid JSON");
    merge_into(tree, loaded, "");
  }
  for (const auto& o : overrides) apply_override(tree, o);
  return tree;
}

}  // namespace geoshift
