#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

namespace geoshift {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> error;  // optional symmetric error bars, same length as y
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  int width = 800;
  int height = 500;
  bool markers = false;
};

/// Line chart written as PNG. Non-finite points are skipped.
void plot_series(const std::filesystem::path& png, const PlotSpec& spec, const std::vector<Series>& series);

/// Renders an adaptation trace (one JSON record per line):
///   losses.png, target_ap.png (if any record carries target_ap) and
///   T_sx.png, T_sy.png, T_lx.png, T_ly.png with one curve per homography.
/// Returns the written files.
std::vector<std::filesystem::path> plot_trace(const std::filesystem::path& trace_jsonl,
                                              const std::filesystem::path& out_dir);

/// Sweep summary {"param": name, "rows": [{"value", "mean", "std"}...]} ->
/// mean target AP against the swept value with one-std error bars.
std::filesystem::path plot_sweep(const nlohmann::json& summary, const std::filesystem::path& out_dir);

}  // namespace geoshift
