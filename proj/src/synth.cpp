#include "geoshift/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <sstream>

#include "geoshift/error.hpp"
#include "geoshift/random.hpp"
#include "geoshift/serialize.hpp"
#include "geoshift/warp.hpp"

namespace geoshift {

namespace fs = std::filesystem;
using nlohmann::json;

const char* shape_name(int class_id) {
  static const char* names[kShapeClasses] = {"disk", "square", "triangle"};
  return class_id >= 0 && class_id < kShapeClasses ? names[class_id] : "unknown";
}

void SceneSpec::validate() const {
  if (image_size < 8) throw Error(Errc::configuration, "scene.image_size must be >= 8");
  if (min_objects < 1 || max_objects < min_objects) throw Error(Errc::configuration, "scene object count range invalid");
  if (!(min_size > 0.0) || max_size < min_size) throw Error(Errc::configuration, "scene object size range invalid");
  if (noise < 0.0) throw Error(Errc::configuration, "scene.noise must be >= 0");
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::none: return "none";
    case ShiftKind::fov: return "fov";
    case ShiftKind::viewpoint: return "viewpoint";
    case ShiftKind::fixed_homography: return "fixed_homography";
  }
  return "none";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "none") return ShiftKind::none;
  if (s == "fov") return ShiftKind::fov;
  if (s == "viewpoint") return ShiftKind::viewpoint;
  if (s == "fixed_homography") return ShiftKind::fixed_homography;
  throw Error(Errc::schema, "unknown shift kind '" + s + "'");
}

void ShiftSpec::validate() const {
  (void)sampling_mapping();
  if (photometric_jitter < 0.0) throw Error(Errc::configuration, "shift.photometric_jitter must be >= 0");
}

DenseMapping ShiftSpec::sampling_mapping() const {
  switch (kind) {
    case ShiftKind::none: return identity_mapping();
    case ShiftKind::fov: {
      const DenseMapping m = spherical_fov_mapping(src_fov, dst_fov);
      DenseMapping s;
      s.name = "fov_sampling";
      s.parameters = m.parameters;
      s.forward = m.inverse;
      s.inverse = m.forward;
      return s;
    }
    case ShiftKind::viewpoint: {
      const DenseMapping m = viewpoint_tilt_mapping(pitch_deg, zoom, src_fov);
      DenseMapping s;
      s.name = "viewpoint_sampling";
      s.parameters = m.parameters;
      s.forward = m.inverse;
      s.inverse = m.forward;
      return s;
    }
    case ShiftKind::fixed_homography: {
      // Target image = warp(scene, homography): pixel q shows scene point H^-1 q.
      const DenseMapping m = homography_mapping(homography);
      DenseMapping s;
      s.name = "homography_sampling";
      s.parameters = m.parameters;
      s.forward = m.inverse;
      s.inverse = m.forward;
      return s;
    }
  }
  return identity_mapping();
}

namespace {

struct SceneObject {
  int class_id;
  double cx, cy, radius;
  double color[3];
};

bool inside(const SceneObject& o, double x, double y) {
  const double dx = x - o.cx, dy = y - o.cy, r = o.radius;
  switch (o.class_id) {
    case 0: return dx * dx + dy * dy <= r * r;
    case 1: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    default: {
      // Upright isosceles triangle, apex at the top (y grows downward).
      const double top = -r, bottom = 0.8 * r;
      if (dy < top || dy > bottom) return false;
      const double half = r * (dy - top) / (bottom - top);
      return std::abs(dx) <= half;
    }
  }
}

struct Background {
  double base[3];
  double gx, gy;
  double amp, fx, fy, px, py;

  void shade(double x, double y, double* rgb) const {
    const double tex = amp * std::sin(fx * x + px) * std::sin(fy * y + py) + gx * x + gy * y;
    for (int c = 0; c < 3; ++c) rgb[c] = base[c] + tex;
  }
};

// Bounding rectangle of the scene region seen through `sampling`.
void visible_bounds(const DenseMapping& sampling, double& x0, double& x1, double& y0, double& y1) {
  x0 = y0 = 1e9;
  x1 = y1 = -1e9;
  constexpr int steps = 33;
  for (int a = 0; a < steps; ++a)
    for (int b = 0; b < steps; ++b) {
      const double u = -1.0 + 2.0 * a / (steps - 1), v = -1.0 + 2.0 * b / (steps - 1);
      const Point2 p = sampling(Point2{u, v});
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
}

double sample_normal(std::mt19937_64& rng) {
  // Box-Muller keeps the sequence independent of the standard library.
  const double u1 = std::max(uniform(rng, 0.0, 1.0), 1e-300), u2 = uniform(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

uint64_t split_tag(Domain d, Split s) { return (d == Domain::source ? 0u : 2u) + (s == Split::train ? 0u : 1u); }

std::string file_name(Domain d, Split s, int index) {
  std::ostringstream os;
  os << (d == Domain::source ? "source" : "target") << "_" << (s == Split::train ? "train" : "val") << "_";
  os.width(5);
  os.fill('0');
  os << index << ".png";
  return os.str();
}

}  // namespace

DomainSample render_sample(const SceneSpec& scene, const DenseMapping& sampling, double photometric_jitter,
                           uint64_t sample_seed, std::vector<int>* object_mask) {
  std::mt19937_64 rng(sample_seed);
  const int size = scene.image_size;

  Background bg{};
  const double gray = uniform(rng, 0.3, 0.7);
  for (double& c : bg.base) c = gray + uniform(rng, -0.08, 0.08);
  bg.gx = uniform(rng, -0.08, 0.08);
  bg.gy = uniform(rng, -0.08, 0.08);
  bg.amp = uniform(rng, 0.02, 0.08);
  bg.fx = uniform(rng, 3.0, 9.0);
  bg.fy = uniform(rng, 3.0, 9.0);
  bg.px = uniform(rng, 0.0, 6.28);
  bg.py = uniform(rng, 0.0, 6.28);

  double x0, x1, y0, y1;
  visible_bounds(sampling, x0, x1, y0, y1);

  std::vector<SceneObject> objects;
  const int count = uniform_int(rng, scene.min_objects, scene.max_objects);
  for (int k = 0; k < count; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      SceneObject o{};
      o.class_id = uniform_int(rng, 0, kShapeClasses - 1);
      o.radius = 0.5 * uniform(rng, scene.min_size, scene.max_size);
      if (x1 - x0 <= 2 * o.radius || y1 - y0 <= 2 * o.radius) break;
      o.cx = uniform(rng, x0 + o.radius, x1 - o.radius);
      o.cy = uniform(rng, y0 + o.radius, y1 - o.radius);
      double mean = 0.0;
      do {
        for (double& c : o.color) c = uniform(rng, 0.05, 0.95);
        mean = (o.color[0] + o.color[1] + o.color[2]) / 3.0;
      } while (std::abs(mean - gray) < 0.2);
      const bool overlaps = std::any_of(objects.begin(), objects.end(), [&](const SceneObject& p) {
        return std::hypot(p.cx - o.cx, p.cy - o.cy) < 1.1 * (p.radius + o.radius);
      });
      if (!overlaps) {
        objects.push_back(o);
        break;
      }
    }
  }

  const double brightness = photometric_jitter > 0 ? uniform(rng, -photometric_jitter, photometric_jitter) : 0.0;
  const double contrast = photometric_jitter > 0 ? 1.0 + uniform(rng, -photometric_jitter, photometric_jitter) : 1.0;

  DomainSample out;
  out.image = {size, size, std::vector<uint8_t>(static_cast<size_t>(size) * size * 3)};
  std::vector<int> mask(static_cast<size_t>(size) * size, -1);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double acc[3] = {0, 0, 0};
      for (int sy = 0; sy < 2; ++sy)
        for (int sx = 0; sx < 2; ++sx) {
          const Point2 q{pixel_to_normalized(j - 0.25 + 0.5 * sx, size), pixel_to_normalized(i - 0.25 + 0.5 * sy, size)};
          const Point2 p = sampling(q);
          double rgb[3];
          bg.shade(p.x, p.y, rgb);
          for (const auto& o : objects)
            if (inside(o, p.x, p.y)) std::copy(o.color, o.color + 3, rgb);
          for (int c = 0; c < 3; ++c) acc[c] += 0.25 * rgb[c];
        }
      const Point2 center = sampling(Point2{pixel_to_normalized(j, size), pixel_to_normalized(i, size)});
      for (size_t o = 0; o < objects.size(); ++o)
        if (inside(objects[o], center.x, center.y)) mask[static_cast<size_t>(i) * size + j] = static_cast<int>(o);
      for (int c = 0; c < 3; ++c) {
        double v = (acc[c] - 0.5) * contrast + 0.5 + brightness + scene.noise * sample_normal(rng);
        v = std::clamp(v, 0.0, 1.0);
        out.image.rgb[(static_cast<size_t>(i) * size + j) * 3 + c] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }

  for (size_t o = 0; o < objects.size(); ++o) {
    int xmin = size, ymin = size, xmax = -1, ymax = -1, pixels = 0;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if (mask[static_cast<size_t>(i) * size + j] == static_cast<int>(o)) {
          xmin = std::min(xmin, j);
          xmax = std::max(xmax, j);
          ymin = std::min(ymin, i);
          ymax = std::max(ymax, i);
          ++pixels;
        }
    if (pixels < scene.min_visible_pixels) continue;
    out.truth.push_back({Box{double(xmin), double(ymin), double(xmax + 1), double(ymax + 1)}, objects[o].class_id});
  }
  if (object_mask) *object_mask = std::move(mask);
  return out;
}

DomainDataset generate_domain_pair(const SceneSpec& scene, const ShiftSpec& shift, const SplitCounts& counts) {
  scene.validate();
  shift.validate();
  DomainDataset ds{scene, shift, counts, {}, {}, {}, {}};
  const DenseMapping source_view = identity_mapping();
  const DenseMapping target_view = shift.sampling_mapping();
  auto fill = [&](std::vector<DomainSample>& out, Domain d, Split s, int n) {
    const bool target = d == Domain::target;
    for (int k = 0; k < n; ++k) {
      DomainSample smp = render_sample(scene, target ? target_view : source_view,
                                       target ? shift.photometric_jitter : 0.0,
                                       derive_seed(scene.seed, {split_tag(d, s), static_cast<uint64_t>(k)}));
      smp.domain = d;
      smp.split = s;
      smp.file = file_name(d, s, k);
      if (!(target && s == Split::train)) smp.annotations = smp.truth;
      out.push_back(std::move(smp));
    }
  };
  fill(ds.source_train, Domain::source, Split::train, counts.source_train);
  fill(ds.source_val, Domain::source, Split::val, counts.source_val);
  fill(ds.target_train, Domain::target, Split::train, counts.target_train);
  fill(ds.target_val, Domain::target, Split::val, counts.target_val);
  return ds;
}

void write_dataset(const DomainDataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
  if (!ann) throw Error(Errc::io, "cannot write " + (dir / "annotations.jsonl").string());
  for (const auto* split : {&dataset.source_train, &dataset.source_val, &dataset.target_train, &dataset.target_val})
    for (const auto& s : *split) {
      cv::Mat bgr(s.image.height, s.image.width, CV_8UC3);
      for (int i = 0; i < s.image.height; ++i)
        for (int j = 0; j < s.image.width; ++j) {
          const uint8_t* p = &s.image.rgb[(static_cast<size_t>(i) * s.image.width + j) * 3];
          bgr.at<cv::Vec3b>(i, j) = cv::Vec3b(p[2], p[1], p[0]);
        }
      if (!cv::imwrite((dir / "images" / s.file).string(), bgr))
        throw Error(Errc::io, "cannot write image " + s.file);
      json rec{{"file", "images/" + s.file},
               {"domain", s.domain == Domain::source ? "source" : "target"},
               {"split", s.split == Split::train ? "train" : "val"}};
      if (s.annotations) {
        json boxes = json::array(), classes = json::array();
        for (const auto& a : *s.annotations) {
          boxes.push_back(a.box);
          classes.push_back(a.class_id);
        }
        rec["boxes"] = boxes;
        rec["classes"] = classes;
      }
      ann << rec.dump() << "\n";
    }
  json manifest{{"format", "geoshift-dataset"},
                {"version", 1},
                {"scene", dataset.scene},
                {"shift", dataset.shift},
                {"counts", dataset.counts},
                {"seed", dataset.scene.seed}};
  std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << "\n";
}

DomainDataset read_dataset(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw Error(Errc::dependency, "no dataset at " + dir.string() + " (run synth-gen first)");
  const json manifest = json::parse(mf);
  DomainDataset ds;
  ds.scene = manifest.at("scene").get<SceneSpec>();
  ds.shift = manifest.at("shift").get<ShiftSpec>();
  ds.counts = manifest.at("counts").get<SplitCounts>();
  std::ifstream ann(dir / "annotations.jsonl");
  std::string line;
  while (std::getline(ann, line)) {
    if (line.empty()) continue;
    const json rec = json::parse(line);
    DomainSample s;
    s.domain = rec.at("domain") == "source" ? Domain::source : Domain::target;
    s.split = rec.at("split") == "train" ? Split::train : Split::val;
    const std::string rel = rec.at("file").get<std::string>();
    s.file = fs::path(rel).filename().string();
    const cv::Mat bgr = cv::imread((dir / rel).string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw Error(Errc::io, "cannot read image " + rel);
    s.image = {bgr.rows, bgr.cols, std::vector<uint8_t>(static_cast<size_t>(bgr.rows) * bgr.cols * 3)};
    for (int i = 0; i < bgr.rows; ++i)
      for (int j = 0; j < bgr.cols; ++j) {
        const cv::Vec3b p = bgr.at<cv::Vec3b>(i, j);
        uint8_t* q = &s.image.rgb[(static_cast<size_t>(i) * bgr.cols + j) * 3];
        q[0] = p[2];
        q[1] = p[1];
        q[2] = p[0];
      }
    if (rec.contains("boxes")) {
      std::vector<Annotation> anns;
      const auto& boxes = rec.at("boxes");
      const auto& classes = rec.at("classes");
      for (size_t k = 0; k < boxes.size(); ++k)
        anns.push_back({Box{boxes[k][0].get<double>(), boxes[k][1].get<double>(), boxes[k][2].get<double>(),
                            boxes[k][3].get<double>()},
                        classes[k].get<int>()});
      s.annotations = anns;
      s.truth = anns;
    }
    auto& split = s.domain == Domain::source ? (s.split == Split::train ? ds.source_train : ds.source_val)
                                             : (s.split == Split::train ? ds.target_train : ds.target_val);
    split.push_back(std::move(s));
  }
  return ds;
}

Tensor to_tensor(const Image8& image) {
  Tensor t(1, 3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    double* p = t.plane(0, c);
    for (size_t k = 0; k < static_cast<size_t>(image.height) * image.width; ++k) p[k] = image.rgb[k * 3 + c] / 255.0;
  }
  return t;
}

Tensor to_tensor(const std::vector<DomainSample>& samples, const std::vector<int>& indices) {
  if (indices.empty()) return {};
  const Image8& first = samples.at(indices.front()).image;
  Tensor t(static_cast<int>(indices.size()), 3, first.height, first.width);
  const size_t plane = static_cast<size_t>(first.height) * first.width;
  for (size_t n = 0; n < indices.size(); ++n) {
    const Image8& img = samples.at(indices[n]).image;
    for (int c = 0; c < 3; ++c) {
      double* p = t.plane(static_cast<int>(n), c);
      for (size_t k = 0; k < plane; ++k) p[k] = img.rgb[k * 3 + c] / 255.0;
    }
  }
  return t;
}

std::vector<std::vector<Annotation>> truths_of(const std::vector<DomainSample>& samples) {
  std::vector<std::vector<Annotation>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.truth);
  return out;
}

}  // namespace geoshift
