#include "geoshift/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "geoshift/error.hpp"

namespace geoshift {

using nlohmann::json;

namespace {

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},  {189, 103, 148},
                               {75, 86, 140},  {194, 119, 227}, {127, 127, 127}, {34, 189, 188}, {207, 190, 23}};

Series named(std::string label) {
  Series s;
  s.label = std::move(label);
  return s;
}

std::string tick_text(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 1e-3);
      lo -= pad;
      hi += pad;
    } else {
      const double pad = 0.05 * (hi - lo);
      lo -= pad;
      hi += pad;
    }
  }
};

void write_png(const std::filesystem::path& png, const cv::Mat& img) {
  if (png.has_parent_path()) std::filesystem::create_directories(png.parent_path());
  if (!cv::imwrite(png.string(), img)) throw Error(Errc::io, "cannot write " + png.string());
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot read " + path.string());
  std::vector<json> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::schema, path.string() + ": malformed record");
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace

void plot_series(const std::filesystem::path& png, const PlotSpec& spec, const std::vector<Series>& series) {
  const int left = 80, right = 170, top = 40, bottom = 60;
  cv::Mat img(spec.height, spec.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = spec.width - left - right, ph = spec.height - top - bottom;

  Range rx, ry;
  for (const auto& s : series)
    for (size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.y[k])) continue;
      rx.add(s.x[k]);
      const double e = k < s.error.size() ? s.error[k] : 0.0;
      ry.add(s.y[k] - e);
      ry.add(s.y[k] + e);
    }
  rx.finish();
  ry.finish();
  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(std::lround((x - rx.lo) / (rx.hi - rx.lo) * pw)),
                     top + static_cast<int>(std::lround((ry.hi - y) / (ry.hi - ry.lo) * ph)));
  };

  const cv::Scalar black(0, 0, 0), grid(225, 225, 225);
  const int font = cv::FONT_HERSHEY_SIMPLEX;
  for (int t = 0; t <= 5; ++t) {
    const double fx = rx.lo + (rx.hi - rx.lo) * t / 5.0, fy = ry.lo + (ry.hi - ry.lo) * t / 5.0;
    const cv::Point px = to_px(fx, ry.lo), py = to_px(rx.lo, fy);
    cv::line(img, {px.x, top}, {px.x, top + ph}, grid, 1);
    cv::line(img, {left, py.y}, {left + pw, py.y}, grid, 1);
    cv::putText(img, tick_text(fx), {px.x - 15, top + ph + 18}, font, 0.4, black, 1, cv::LINE_AA);
    cv::putText(img, tick_text(fy), {8, py.y + 4}, font, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, black, 1);
  cv::putText(img, spec.title, {left, 25}, font, 0.6, black, 1, cv::LINE_AA);
  cv::putText(img, spec.x_label, {left + pw / 2 - 30, spec.height - 15}, font, 0.5, black, 1, cv::LINE_AA);
  cv::putText(img, spec.y_label, {8, top - 8}, font, 0.45, black, 1, cv::LINE_AA);

  for (size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const cv::Scalar color = kPalette[i % std::size(kPalette)];
    std::vector<cv::Point> run;
    auto flush = [&] {
      if (run.size() > 1) cv::polylines(img, run, false, color, 2, cv::LINE_AA);
      run.clear();
    };
    for (size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.y[k]) || !std::isfinite(s.x[k])) {
        flush();
        continue;
      }
      const cv::Point p = to_px(s.x[k], s.y[k]);
      run.push_back(p);
      if (spec.markers) cv::circle(img, p, 4, color, cv::FILLED, cv::LINE_AA);
      if (k < s.error.size() && s.error[k] > 0.0) {
        const cv::Point a = to_px(s.x[k], s.y[k] - s.error[k]), b = to_px(s.x[k], s.y[k] + s.error[k]);
        cv::line(img, a, b, color, 1, cv::LINE_AA);
        cv::line(img, {a.x - 4, a.y}, {a.x + 4, a.y}, color, 1, cv::LINE_AA);
        cv::line(img, {b.x - 4, b.y}, {b.x + 4, b.y}, color, 1, cv::LINE_AA);
      }
    }
    flush();
    const int ly = top + 15 + 20 * static_cast<int>(i);
    cv::line(img, {left + pw + 12, ly - 4}, {left + pw + 32, ly - 4}, color, 2, cv::LINE_AA);
    cv::putText(img, s.label, {left + pw + 38, ly}, font, 0.45, black, 1, cv::LINE_AA);
  }
  write_png(png, img);
}

std::vector<std::filesystem::path> plot_trace(const std::filesystem::path& trace_jsonl,
                                              const std::filesystem::path& out_dir) {
  const auto records = read_jsonl(trace_jsonl);
  if (records.empty()) throw Error(Errc::schema, trace_jsonl.string() + ": empty trace");
  std::vector<std::filesystem::path> written;

  Series src_cls = named("source cls"), src_reg = named("source reg"), tgt_cls = named("target cls"),
         ap = named("target AP@0.5");
  size_t n_transforms = 0;
  for (const auto& r : records) n_transforms = std::max(n_transforms, r.value("T_st", json::array()).size());
  std::vector<std::vector<Series>> params(4, std::vector<Series>(n_transforms));
  for (int t = 0; t < 4; ++t)
    for (size_t i = 0; i < n_transforms; ++i) params[t][i].label = "H" + std::to_string(i);

  for (const auto& r : records) {
    const double step = r.at("step").get<double>();
    src_cls.x.push_back(step);
    src_cls.y.push_back(r.at("loss_src_cls").get<double>());
    src_reg.x.push_back(step);
    src_reg.y.push_back(r.at("loss_src_reg").get<double>());
    tgt_cls.x.push_back(step);
    tgt_cls.y.push_back(r.at("loss_tgt_cls").get<double>());
    if (r.contains("target_ap")) {
      ap.x.push_back(step);
      ap.y.push_back(r["target_ap"].get<double>());
    }
    const json& set = r.value("T_st", json::array());
    for (size_t i = 0; i < set.size(); ++i)
      for (int t = 0; t < 4; ++t) {
        params[t][i].x.push_back(step);
        params[t][i].y.push_back(set[i].at(t).get<double>());
      }
  }

  written.push_back(out_dir / "losses.png");
  plot_series(written.back(), {.title = "adaptation losses", .x_label = "step", .y_label = "loss"}, {src_cls, src_reg, tgt_cls});
  if (!ap.x.empty()) {
    written.push_back(out_dir / "target_ap.png");
    plot_series(written.back(), {.title = "teacher target AP@0.5", .x_label = "step", .y_label = "AP"}, {ap});
  }
  if (n_transforms > 0) {
    const char* names[] = {"sx", "sy", "lx", "ly"};
    for (int t = 0; t < 4; ++t) {
      written.push_back(out_dir / (std::string("T_") + names[t] + ".png"));
      plot_series(written.back(), {.title = std::string("evolution of ") + names[t], .x_label = "step", .y_label = names[t]}, params[t]);
    }
  }
  return written;
}

std::filesystem::path plot_sweep(const json& summary, const std::filesystem::path& out_dir) {
  const std::string param = summary.at("param").get<std::string>();
  Series s = named("mean target AP@0.5");
  for (const auto& row : summary.at("rows")) {
    s.x.push_back(row.at("value").get<double>());
    s.y.push_back(row.at("mean").get<double>());
    s.error.push_back(row.value("std", 0.0));
  }
  const auto png = out_dir / ("ap_vs_" + param + ".png");
  PlotSpec spec{.title = "target AP@0.5 vs " + param, .x_label = param, .y_label = "AP@0.5", .markers = true};
  plot_series(png, spec, {s});
  return png;
}

}  // namespace geoshift
