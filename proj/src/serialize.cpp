#include "geoshift/serialize.hpp"

#include "geoshift/error.hpp"

namespace geoshift {

using nlohmann::json;

void to_json(json& j, const HomographyParams& p) { j = json::array({p.sx, p.sy, p.lx, p.ly}); }

void from_json(const json& j, HomographyParams& p) {
  if (!j.is_array() || j.size() != 4) throw Error(Errc::schema, "homography must be [sx, sy, lx, ly]");
  p = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void to_json(json& j, const Box& b) { j = json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

void to_json(json& j, const Detection& d) { j = json{{"box", d.box}, {"class", d.class_id}, {"score", d.score}}; }

void to_json(json& j, const SceneSpec& s) {
  j = json{{"image_size", s.image_size}, {"min_objects", s.min_objects}, {"max_objects", s.max_objects},
           {"min_size", s.min_size},     {"max_size", s.max_size},       {"noise", s.noise},
           {"min_visible_pixels", s.min_visible_pixels}, {"seed", s.seed}};
}

void from_json(const json& j, SceneSpec& s) {
  s.image_size = j.at("image_size").get<int>();
  s.min_objects = j.at("min_objects").get<int>();
  s.max_objects = j.at("max_objects").get<int>();
  s.min_size = j.at("min_size").get<double>();
  s.max_size = j.at("max_size").get<double>();
  s.noise = j.at("noise").get<double>();
  s.min_visible_pixels = j.at("min_visible_pixels").get<int>();
  s.seed = j.at("seed").get<uint64_t>();
}

void to_json(json& j, const ShiftSpec& s) {
  j = json{{"kind", to_string(s.kind)},
           {"src_fov", {s.src_fov.x_deg, s.src_fov.y_deg}},
           {"dst_fov", {s.dst_fov.x_deg, s.dst_fov.y_deg}},
           {"pitch_deg", s.pitch_deg},
           {"zoom", s.zoom},
           {"homography", s.homography},
           {"photometric_jitter", s.photometric_jitter}};
}

void from_json(const json& j, ShiftSpec& s) {
  s.kind = shift_kind_from_string(j.at("kind").get<std::string>());
  s.src_fov = {j.at("src_fov").at(0).get<double>(), j.at("src_fov").at(1).get<double>()};
  s.dst_fov = {j.at("dst_fov").at(0).get<double>(), j.at("dst_fov").at(1).get<double>()};
  s.pitch_deg = j.at("pitch_deg").get<double>();
  s.zoom = j.at("zoom").get<double>();
  s.homography = j.at("homography").get<HomographyParams>();
  s.photometric_jitter = j.at("photometric_jitter").get<double>();
}

void to_json(json& j, const SplitCounts& c) {
  j = json{{"source_train", c.source_train}, {"source_val", c.source_val},
           {"target_train", c.target_train}, {"target_val", c.target_val}};
}

void from_json(const json& j, SplitCounts& c) {
  c.source_train = j.at("source_train").get<int>();
  c.source_val = j.at("source_val").get<int>();
  c.target_train = j.at("target_train").get<int>();
  c.target_val = j.at("target_val").get<int>();
}

}  // namespace geoshift
