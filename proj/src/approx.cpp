#include "geoshift/approx.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "geoshift/error.hpp"
#include "geoshift/warp.hpp"

namespace geoshift {

std::vector<Point2> Grid::points() const {
  std::vector<Point2> pts;
  pts.reserve(static_cast<size_t>(size()));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) pts.push_back({pixel_to_normalized(c, cols), pixel_to_normalized(r, rows)});
  return pts;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double point_error(const HomographyParams& h, Point2 q, Point2 target) {
  const double w = h.lx * q.x + h.ly * q.y + 1.0;
  if (!(std::abs(w) > kProjectiveEps)) return kInf;
  return std::hypot(h.sx * q.x / w - target.x, h.sy * q.y / w - target.y);
}

double group_cost(const HomographyParams& h, const std::vector<Point2>& pts, const std::vector<Point2>& targets,
                  const std::vector<int>& cells) {
  double cost = 0.0;
  for (int k : cells) {
    const double e = point_error(h, pts[k], targets[k]);
    cost += e * e;
  }
  return cost;
}

// Levenberg-Marquardt on the summed squared remap error of `cells`. Only
// strictly improving steps are accepted, so the cost never increases.
HomographyParams refit(HomographyParams h, const std::vector<Point2>& pts, const std::vector<Point2>& targets,
                       const std::vector<int>& cells, int steps) {
  if (cells.empty()) return h;
  double cost = group_cost(h, pts, targets, cells);
  double damping = 1e-3;
  for (int it = 0; it < steps && damping < 1e12; ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (int k : cells) {
      const Point2 q = pts[k];
      const double w = h.lx * q.x + h.ly * q.y + 1.0;
      const double ux = h.sx * q.x / w, uy = h.sy * q.y / w;
      const Eigen::Vector4d jx(q.x / w, 0.0, -ux * q.x / w, -ux * q.y / w);
      const Eigen::Vector4d jy(0.0, q.y / w, -uy * q.x / w, -uy * q.y / w);
      const double rx = ux - targets[k].x, ry = uy - targets[k].y;
      jtj += jx * jx.transpose() + jy * jy.transpose();
      jtr += jx * rx + jy * ry;
    }
    bool accepted = false;
    while (!accepted && damping < 1e12) {
      Eigen::Matrix4d a = jtj;
      for (int d = 0; d < 4; ++d) a(d, d) += damping * std::max(jtj(d, d), 1e-12);
      const Eigen::Vector4d delta = a.ldlt().solve(-jtr);
      const HomographyParams cand{h.sx + delta[0], h.sy + delta[1], h.lx + delta[2], h.ly + delta[3]};
      const double c = cand.is_valid() ? group_cost(cand, pts, targets, cells) : kInf;
      if (c < cost) {
        const double gain = cost - c;
        h = cand;
        cost = c;
        damping = std::max(damping * 0.3, 1e-12);
        accepted = true;
        if (gain <= 1e-15 * (1.0 + cost)) return h;
      } else {
        damping *= 10.0;
      }
    }
  }
  return h;
}

}  // namespace

HomographySet pixelwise_emulation(const DenseMapping& mapping, const Grid& grid) {
  const auto pts = grid.points();
  HomographySet out;
  out.reserve(pts.size());
  for (size_t k = 0; k < pts.size(); ++k) {
    try {
      out.push_back(solve_point_mapping(pts[k], mapping(pts[k])));
    } catch (const Error& e) {
      std::ostringstream os;
      os << "cell " << k / grid.cols << "," << k % grid.cols << ": " << e.what();
      throw Error(e.code(), os.str());
    }
  }
  return out;
}

SelectionMap select_best(const HomographySet& set, const DenseMapping& mapping, const Grid& grid) {
  const auto pts = grid.points();
  SelectionMap sel{grid.rows, grid.cols, std::vector<int>(pts.size(), 0)};
  for (size_t k = 0; k < pts.size(); ++k) {
    const Point2 target = mapping(pts[k]);
    double best = kInf;
    for (size_t i = 0; i < set.size(); ++i) {
      const double e = point_error(set[i], pts[k], target);
      if (e < best) {
        best = e;
        sel.index[k] = static_cast<int>(i);
      }
    }
  }
  return sel;
}

RemapError remap_error(const HomographySet& set, const SelectionMap& selection, const DenseMapping& mapping,
                       const Grid& grid, double reference_resolution) {
  const auto pts = grid.points();
  if (selection.index.size() != pts.size()) throw Error(Errc::shape, "selection map does not match the grid");
  const double scale = reference_resolution / 2.0;
  double sum = 0.0, mx = 0.0;
  for (size_t k = 0; k < pts.size(); ++k) {
    const int i = selection.index[k];
    if (i < 0 || i >= static_cast<int>(set.size())) throw Error(Errc::invalid_parameter, "selection index out of range");
    const double e = point_error(set[i], pts[k], mapping(pts[k])) * scale;
    sum += e * e;
    mx = std::max(mx, e);
  }
  return {std::sqrt(sum / static_cast<double>(pts.size())), mx};
}

FitReport fit_homography_set(const DenseMapping& mapping, int n, const Grid& grid, const FitConfig& config,
                             const std::optional<HomographySet>& initial) {
  if (n < 1) throw Error(Errc::invalid_parameter, "need at least one homography");
  if (grid.rows < 1 || grid.cols < 1) throw Error(Errc::invalid_parameter, "empty grid");
  const auto pts = grid.points();
  std::vector<Point2> targets(pts.size());
  for (size_t k = 0; k < pts.size(); ++k) targets[k] = mapping(pts[k]);

  HomographySet set;
  if (initial) {
    if (static_cast<int>(initial->size()) != n) throw Error(Errc::invalid_parameter, "initial set size differs from n");
    for (const auto& h : *initial) validate(h);
    set = *initial;
  } else {
    std::vector<double> key(pts.size());
    for (size_t k = 0; k < pts.size(); ++k) {
      const double sx = targets[k].x / pts[k].x, sy = targets[k].y / pts[k].y;
      key[k] = sx > 0 && sy > 0 && std::isfinite(sx * sy) ? sx * sy : 0.0;
    }
    std::vector<int> order(pts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] < key[b]; });
    set.assign(n, HomographyParams::identity());
    for (int i = 0; i < n; ++i) {
      const size_t lo = order.size() * i / n, hi = order.size() * (i + 1) / n;
      const std::vector<int> cells(order.begin() + lo, order.begin() + hi);
      set[i] = refit(HomographyParams::identity(), pts, targets, cells, config.steps);
    }
  }

  FitReport report;
  double previous = kInf;
  for (int round = 0;; ++round) {
    report.selection = select_best(set, mapping, grid);
    const RemapError err = remap_error(set, report.selection, mapping, grid, config.reference_resolution);
    report.rmse = err.rmse;
    report.max_error = err.max_error;
    report.iterations = round;
    if (round >= config.rounds || previous - err.rmse < config.tolerance_px) break;
    previous = err.rmse;
    std::vector<std::vector<int>> groups(n);
    for (size_t k = 0; k < pts.size(); ++k) groups[report.selection.index[k]].push_back(static_cast<int>(k));
    for (int i = 0; i < n; ++i) set[i] = refit(set[i], pts, targets, groups[i], config.steps);
  }
  report.set = set;
  return report;
}

}  // namespace geoshift
