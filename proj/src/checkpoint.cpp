#include "geoshift/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "geoshift/error.hpp"
#include "geoshift/serialize.hpp"

namespace geoshift {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'G', 'S', 'H', 'F', 'T', 'C', 'K', 'P'};
}

std::string to_string(AggregatorKind kind) {
  switch (kind) {
    case AggregatorKind::none: return "none";
    case AggregatorKind::learned: return "learned";
    case AggregatorKind::mean: return "mean";
    case AggregatorKind::max: return "max";
  }
  return "none";
}

AggregatorKind aggregator_kind_from_string(const std::string& s) {
  if (s == "none") return AggregatorKind::none;
  if (s == "learned") return AggregatorKind::learned;
  if (s == "mean") return AggregatorKind::mean;
  if (s == "max") return AggregatorKind::max;
  throw Error(Errc::schema, "unknown aggregator kind '" + s + "'");
}

json detector_config_to_json(const DetectorConfig& c) {
  return {{"widths", c.backbone.widths},
          {"strides", c.backbone.strides},
          {"input_channels", c.backbone.input_channels},
          {"num_classes", c.head.num_classes},
          {"box_scale", c.head.box_scale},
          {"image_size", c.image_size}};
}

DetectorConfig detector_config_from_json(const json& j) {
  DetectorConfig c;
  c.backbone.widths = j.at("widths").get<std::vector<int>>();
  c.backbone.strides = j.at("strides").get<std::vector<int>>();
  c.backbone.input_channels = j.at("input_channels").get<int>();
  c.head.num_classes = j.at("num_classes").get<int>();
  c.head.box_scale = j.at("box_scale").get<double>();
  c.image_size = j.at("image_size").get<int>();
  return c;
}

void save_checkpoint(const fs::path& path, GeoDetector& model, const CheckpointInfo& info) {
  json tensors = json::array();
  std::vector<const Tensor*> order;
  model.visit_state([&](const std::string& name, Tensor& value, Tensor*) {
    tensors.push_back({{"name", name}, {"shape", {value.n(), value.c(), value.h(), value.w()}}});
    order.push_back(&value);
  });
  const json header{{"stage", info.stage},
                    {"step", info.step},
                    {"config", info.config},
                    {"metrics", info.metrics},
                    {"detector", detector_config_to_json(model.config())},
                    {"aggregator_kind", to_string(model.kind)},
                    {"transforms", model.transforms},
                    {"tensors", tensors}};
  const std::string text = header.dump();

  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write checkpoint " + path.string());
  const uint32_t version = kCheckpointVersion;
  const uint64_t length = text.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : order)
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!out) throw Error(Errc::io, "short write on " + path.string());
}

GeoDetector load_checkpoint(const fs::path& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::dependency, "missing checkpoint " + path.string());
  char magic[8];
  uint32_t version = 0;
  uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(Errc::io, path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion)
    throw Error(Errc::io, "unsupported checkpoint version " + std::to_string(version));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  const json header = json::parse(text);

  GeoDetector model(detector_config_from_json(header.at("detector")), 0);
  const auto set = header.at("transforms").get<HomographySet>();
  if (!set.empty()) model.attach_transforms(set, aggregator_kind_from_string(header.at("aggregator_kind")), 0);

  const json& table = header.at("tensors");
  size_t k = 0;
  model.visit_state([&](const std::string& name, Tensor& value, Tensor*) {
    if (k >= table.size() || table[k].at("name") != name)
      throw Error(Errc::io, "checkpoint tensor table does not match the architecture at " + name);
    const auto shape = table[k].at("shape").get<std::vector<int>>();
    if (shape != std::vector<int>{value.n(), value.c(), value.h(), value.w()})
      throw Error(Errc::io, "checkpoint tensor " + name + " has the wrong shape");
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    ++k;
  });
  if (!in || k != table.size()) throw Error(Errc::io, "truncated checkpoint " + path.string());
  if (info) {
    info->stage = header.at("stage").get<std::string>();
    info->step = header.at("step").get<int64_t>();
    info->config = header.at("config");
    info->metrics = header.at("metrics");
  }
  return model;
}

}  // namespace geoshift
