#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "geoshift/geometry.hpp"
#include "geoshift/mapping.hpp"

namespace geoshift {

/// rows x cols cell centers of the normalized frame. Even extents keep every
/// center off the coordinate axes.
struct Grid {
  int rows = 0;
  int cols = 0;

  std::vector<Point2> points() const;
  int size() const { return rows * cols; }
};

/// Per-cell (row-major) 0-based index of the homography that remaps it.
struct SelectionMap {
  int rows = 0;
  int cols = 0;
  std::vector<int> index;
};

struct FitConfig {
  int rounds = 20;              // alternating-minimization cap
  int steps = 200;              // damped Gauss-Newton iterations per refit
  double tolerance_px = 1e-6;   // stop when rmse improves by less than this
  double reference_resolution = 256.0;
};

struct FitReport {
  HomographySet set;
  SelectionMap selection;
  double rmse = 0.0;       // pixels at reference_resolution
  double max_error = 0.0;  // pixels
  int iterations = 0;
};

struct RemapError {
  double rmse = 0.0;
  double max_error = 0.0;
};

/// One homography per grid cell, each solving the exact point mapping
/// cell -> mapping(cell). Errors of solve_point_mapping are rethrown with
/// the offending cell in the message.
HomographySet pixelwise_emulation(const DenseMapping& mapping, const Grid& grid);

/// Per cell: distance between mapping(q) and the selected homography's
/// image of q, in pixels at `reference_resolution` (the frame is
/// reference_resolution pixels wide). Cells whose selected homography
/// sends them to infinity count as +inf.
RemapError remap_error(const HomographySet& set, const SelectionMap& selection, const DenseMapping& mapping,
                       const Grid& grid, double reference_resolution);

/// Cell-wise argmin of the remap error; ties go to the lowest index.
SelectionMap select_best(const HomographySet& set, const DenseMapping& mapping, const Grid& grid);

/// Alternating minimization of n homographies plus a selection map.
/// Without `initial`, cells are split into n quantile groups of their
/// pixelwise scale product and each group is fitted from the identity.
/// With `initial` (n entries), fitting starts from it, and the reported
/// rmse never exceeds the one of the initial set under argmin selection.
FitReport fit_homography_set(const DenseMapping& mapping, int n, const Grid& grid, const FitConfig& config = {},
                             const std::optional<HomographySet>& initial = std::nullopt);

}  // namespace geoshift
