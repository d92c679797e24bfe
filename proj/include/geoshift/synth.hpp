#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "geoshift/boxes.hpp"
#include "geoshift/geometry.hpp"
#include "geoshift/mapping.hpp"
#include "geoshift/tensor.hpp"

namespace geoshift {

inline constexpr int kShapeClasses = 3;  // disk, square, triangle
const char* shape_name(int class_id);

struct SceneSpec {
  int image_size = 64;
  int min_objects = 2;
  int max_objects = 4;
  double min_size = 0.35;  // object diameter in source-frame units (frame width is 2)
  double max_size = 0.6;
  double noise = 0.02;      // per-pixel sensor noise std-dev (intensity in [0, 1])
  int min_visible_pixels = 6;
  uint64_t seed = 0;

  void validate() const;
};

enum class ShiftKind { none, fov, viewpoint, fixed_homography };

struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  FieldOfView src_fov{50.0, 26.0};
  FieldOfView dst_fov{90.0, 34.0};
  double pitch_deg = 25.0;
  double zoom = 1.5;
  HomographyParams homography;
  double photometric_jitter = 0.0;  // target-only brightness/contrast perturbation

  void validate() const;
  /// Target pixel (normalized) -> scene coordinate. Identity for `none`.
  DenseMapping sampling_mapping() const;
};

std::string to_string(ShiftKind kind);
ShiftKind shift_kind_from_string(const std::string& s);

struct SplitCounts {
  int source_train = 500;
  int source_val = 100;
  int target_train = 500;
  int target_val = 100;
};

enum class Domain { source, target };
enum class Split { train, val };

/// 8-bit interleaved RGB image.
struct Image8 {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> rgb;

  friend bool operator==(const Image8&, const Image8&) = default;
};

struct DomainSample {
  Image8 image;
  Domain domain = Domain::source;
  Split split = Split::train;
  std::string file;
  /// Labels visible to trainers; absent for the unlabeled target-train split.
  std::optional<std::vector<Annotation>> annotations;
  /// Truth kept for evaluation and analysis only.
  std::vector<Annotation> truth;
};

struct DomainDataset {
  SceneSpec scene;
  ShiftSpec shift;
  SplitCounts counts;
  std::vector<DomainSample> source_train, source_val, target_train, target_val;
};

/// Renders one scene as seen through `sampling` (target pixel -> scene).
/// Boxes come from the rendered object masks. `object_mask`, if given,
/// receives per pixel the index of the object covering its center or -1.
DomainSample render_sample(const SceneSpec& scene, const DenseMapping& sampling, double photometric_jitter,
                           uint64_t sample_seed, std::vector<int>* object_mask = nullptr);

/// Bit-reproducible from scene.seed. Source images are rendered directly;
/// target images through shift.sampling_mapping().
DomainDataset generate_domain_pair(const SceneSpec& scene, const ShiftSpec& shift, const SplitCounts& counts);

/// Image directory plus annotations.jsonl and manifest.json. Target-train
/// records carry no box or class fields.
void write_dataset(const DomainDataset& dataset, const std::filesystem::path& dir);
DomainDataset read_dataset(const std::filesystem::path& dir);

/// Stacks images [first, first + count) of a split into a count x 3 x H x W
/// tensor with intensities in [0, 1].
Tensor to_tensor(const std::vector<DomainSample>& samples, const std::vector<int>& indices);
Tensor to_tensor(const Image8& image);

std::vector<std::vector<Annotation>> truths_of(const std::vector<DomainSample>& samples);

}  // namespace geoshift
