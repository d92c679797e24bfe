#include "geoshift/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>

#include "geoshift/checkpoint.hpp"
#include "geoshift/error.hpp"
#include "geoshift/plot.hpp"
#include "geoshift/random.hpp"
#include "geoshift/serialize.hpp"

#ifndef GEOSHIFT_CODE_VERSION
#define GEOSHIFT_CODE_VERSION "unknown"
#endif

namespace geoshift {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kManifest = "manifest.json";

// The checkpoint snapshot leaves out where artifacts live, so re-running a
// stage elsewhere reproduces the same bytes.
json snapshot(const json& tree) {
  json s = tree;
  s.erase("output_dir");
  return s;
}

void require(const fs::path& file, const std::string& stage) {
  if (!fs::exists(file))
    throw Error(Errc::dependency, "missing " + file.string() + " (run " + stage + " first)");
}

// Data must come from the scene, shift, counts and seed of this config.
DomainDataset load_matching_dataset(const fs::path& dir, const ExperimentConfig& cfg) {
  require(dir / kManifest, "synth-gen");
  DomainDataset ds = read_dataset(dir);
  if (json(ds.scene) != json(cfg.seeded_scene()) || json(ds.shift) != json(cfg.shift) ||
      json(ds.counts) != json(cfg.counts))
    throw Error(Errc::configuration,
                "dataset in " + dir.string() + " was generated from a different scene/shift/counts/seed; rerun synth-gen");
  return ds;
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& file) : out_(file) {
    if (!out_) throw Error(Errc::io, "cannot write " + file.string());
  }
  void operator()(const json& record) { out_ << record.dump() << '\n'; }

 private:
  std::ofstream out_;
};

StageResult finish(const fs::path& dir, const std::string& stage, const json& tree, const json& metrics,
                   const json& extra = {}) {
  write_json(dir / "metrics.json", metrics);
  json manifest = make_manifest(stage, tree, extra);
  write_json(dir / kManifest, manifest);
  return {dir, metrics};
}

TrainOutcome train_base_into(const ExperimentConfig& cfg, const json& tree, const DomainDataset& ds,
                             const fs::path& dir) {
  fs::create_directories(dir);
  JsonlWriter trace(dir / "trace.jsonl");
  TrainOutcome out = train_base(ds.source_train, ds.source_val, cfg.detector, cfg.base, cfg.seed,
                                [&](const json& r) { trace(r); });
  out.metrics["target_val_ap50"] = evaluate(out.model, ds.target_val, cfg.eval).mean_ap50;
  save_checkpoint(dir / "model.ckpt", out.model, {"base", cfg.base.steps, snapshot(tree), out.metrics});
  return out;
}

TrainOutcome train_aggregator_into(const ExperimentConfig& cfg, const json& tree, const DomainDataset& ds,
                                   const fs::path& base_ckpt, const fs::path& dir) {
  require(base_ckpt, "train-base");
  const GeoDetector base = load_checkpoint(base_ckpt);
  fs::create_directories(dir);
  JsonlWriter trace(dir / "trace.jsonl");
  TrainOutcome out = train_aggregator(base, ds.source_train, ds.source_val, cfg.aggregator, cfg.seed,
                                      [&](const json& r) { trace(r); });
  out.metrics["target_val_ap50"] = evaluate(out.model, ds.target_val, cfg.eval).mean_ap50;
  save_checkpoint(dir / "model.ckpt", out.model, {"aggregator", cfg.aggregator.steps, snapshot(tree), out.metrics});
  return out;
}

json adapt_into(const ExperimentConfig& cfg, const json& tree, const DomainDataset& ds, const fs::path& init_ckpt,
                const std::string& upstream_stage, const fs::path& dir) {
  require(init_ckpt, upstream_stage);
  GeoDetector initial = load_checkpoint(init_ckpt);
  fs::create_directories(dir);
  json metrics;
  metrics["initial_target_ap50"] = evaluate(initial, ds.target_val, cfg.eval).mean_ap50;
  JsonlWriter trace(dir / "trace.jsonl");
  AdaptOutcome out =
      adapt(initial, ds.source_train, ds.target_train, ds.target_val, cfg.adapt, cfg.seed, [&](const json& r) { trace(r); });
  metrics.update(out.metrics);
  metrics.erase("history");
  const CheckpointInfo info{"adapt", cfg.adapt.steps, snapshot(tree), metrics};
  save_checkpoint(dir / "teacher.ckpt", out.teacher, info);
  save_checkpoint(dir / "student.ckpt", out.student, info);
  return metrics;
}

// Reuses a stage directory whose manifest records exactly this config.
bool up_to_date(const fs::path& dir, const json& tree) {
  const fs::path m = dir / kManifest;
  if (!fs::exists(m)) return false;
  return read_json(m).value("config", json()) == tree;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / v.size();
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / (v.size() - 1));
}

std::string value_tag(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

// Checkerboard seen through `through`; grey where the point has no image.
cv::Mat checker_view(int size, const std::function<std::optional<Point2>(Point2)>& through) {
  cv::Mat img(size, size, CV_8UC3);
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      const Point2 q{(2.0 * j + 1.0) / size - 1.0, (2.0 * i + 1.0) / size - 1.0};
      const auto p = through(q);
      cv::Vec3b color(128, 128, 128);
      if (p && std::abs(p->x) <= 1.0 && std::abs(p->y) <= 1.0) {
        const int cx = static_cast<int>(std::floor((p->x + 1.0) * 6.0));
        const int cy = static_cast<int>(std::floor((p->y + 1.0) * 6.0));
        const bool dark = (cx + cy) % 2 != 0;
        color = dark ? cv::Vec3b(60, 60, 60) : cv::Vec3b(235, 235, 235);
        if (std::abs(p->x) < 0.02 || std::abs(p->y) < 0.02) color = cv::Vec3b(40, 40, 220);
      }
      img.at<cv::Vec3b>(i, j) = color;
    }
  return img;
}

}  // namespace

std::string code_version() { return GEOSHIFT_CODE_VERSION; }

json make_manifest(const std::string& stage, const json& tree, const json& extra) {
  json m{{"stage", stage}, {"code_version", code_version()}, {"seed", tree.at("seed")}, {"config", tree}};
  if (extra.is_object()) m.update(extra);
  return m;
}

void write_json(const fs::path& file, const json& j) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw Error(Errc::io, "cannot write " + file.string());
  out << std::setw(2) << j << '\n';
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(Errc::io, "cannot read " + file.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::schema, file.string() + ": not valid JSON");
  return j;
}

json config_tree_of(const json& contents) {
  if (contents.is_object() && contents.contains("stage") && contents.contains("config")) return contents["config"];
  return contents;
}

StageResult run_synth_gen(const json& tree) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DomainDataset ds = generate_domain_pair(cfg.seeded_scene(), cfg.shift, cfg.counts);
  write_dataset(ds, layout.data());
  // The dataset manifest already carries the specs; add the stage record.
  json manifest = read_json(layout.data() / kManifest);
  manifest.update(make_manifest("synth-gen", tree));
  write_json(layout.data() / kManifest, manifest);
  json metrics{{"source_train", ds.source_train.size()}, {"source_val", ds.source_val.size()},
               {"target_train", ds.target_train.size()}, {"target_val", ds.target_val.size()}};
  return {layout.data(), metrics};
}

StageResult run_train_base(const json& tree) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DomainDataset ds = load_matching_dataset(layout.data(), cfg);
  const TrainOutcome out = train_base_into(cfg, tree, ds, layout.base());
  return finish(layout.base(), "train-base", tree, out.metrics, {{"inputs", {layout.data().string()}}});
}

StageResult run_train_aggregator(const json& tree) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DomainDataset ds = load_matching_dataset(layout.data(), cfg);
  const TrainOutcome out = train_aggregator_into(cfg, tree, ds, layout.base() / "model.ckpt", layout.aggregator());
  return finish(layout.aggregator(), "train-aggregator", tree, out.metrics,
                {{"inputs", {layout.data().string(), layout.base().string()}}});
}

StageResult run_adapt(const json& tree, AdaptStart start, const std::string& name) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DomainDataset ds = load_matching_dataset(layout.data(), cfg);
  const bool from_base = start == AdaptStart::base;
  const fs::path upstream = from_base ? layout.base() : layout.aggregator();
  const json metrics = adapt_into(cfg, tree, ds, upstream / "model.ckpt", from_base ? "train-base" : "train-aggregator",
                                  layout.adapt(name));
  return finish(layout.adapt(name), "adapt", tree, metrics,
                {{"start", from_base ? "base" : "aggregator"}, {"inputs", {layout.data().string(), upstream.string()}}});
}

StageResult run_eval(const json& tree, const fs::path& checkpoint, const std::string& split, const std::string& name) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DomainDataset ds = load_matching_dataset(layout.data(), cfg);
  const std::vector<DomainSample>* samples = nullptr;
  if (split == "source_train") samples = &ds.source_train;
  if (split == "source_val") samples = &ds.source_val;
  if (split == "target_val") samples = &ds.target_val;
  if (split == "target_train") throw Error(Errc::configuration, "target_train is unlabeled and cannot be evaluated");
  if (!samples) throw Error(Errc::configuration, "unknown split " + split);
  require(checkpoint, "the stage that produces " + checkpoint.filename().string());
  CheckpointInfo info;
  GeoDetector model = load_checkpoint(checkpoint, &info);
  json report = to_json(evaluate(model, *samples, cfg.eval));
  report["split"] = split;
  report["checkpoint"] = checkpoint.string();
  report["checkpoint_stage"] = info.stage;
  report["eval"] = tree.at("eval");
  const std::string stem = name.empty() ? info.stage + "_" + split : name;
  write_json(layout.eval() / (stem + ".json"), report);
  write_json(layout.eval() / (stem + ".manifest.json"),
             make_manifest("eval", tree, {{"checkpoint", checkpoint.string()}, {"split", split}}));
  return {layout.eval(), report};
}

StageResult run_fit_approx(const json& tree, bool visualize) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const DenseMapping mapping = cfg.fit.dense_mapping();
  const Grid grid{cfg.fit.grid_rows, cfg.fit.grid_cols};
  const FitReport r = fit_homography_set(mapping, cfg.fit.n, grid, cfg.fit.solver);
  json report{{"mapping", cfg.fit.mapping},
              {"n", cfg.fit.n},
              {"grid", {grid.rows, grid.cols}},
              {"reference_resolution", cfg.fit.solver.reference_resolution},
              {"rmse_px", r.rmse},
              {"max_error_px", r.max_error},
              {"iterations", r.iterations},
              {"set", r.set},
              {"selection", r.selection.index}};
  fs::create_directories(layout.fit());
  write_json(layout.fit() / "report.json", report);
  if (visualize) {
    const int size = 256;
    auto cell_of = [&](Point2 q) {
      const int row = std::clamp(static_cast<int>((q.y + 1.0) * 0.5 * grid.rows), 0, grid.rows - 1);
      const int col = std::clamp(static_cast<int>((q.x + 1.0) * 0.5 * grid.cols), 0, grid.cols - 1);
      return r.selection.index[row * grid.cols + col];
    };
    const cv::Mat original = checker_view(size, [](Point2 q) { return std::optional<Point2>(q); });
    const cv::Mat exact = checker_view(size, [&](Point2 q) { return std::optional<Point2>(mapping(q)); });
    const cv::Mat approx = checker_view(size, [&](Point2 q) -> std::optional<Point2> {
      try {
        return apply_point(r.set[cell_of(q)], q);
      } catch (const Error&) {
        return std::nullopt;
      }
    });
    cv::Mat row;
    cv::hconcat(std::vector<cv::Mat>{original, exact, approx}, row);
    if (!cv::imwrite((layout.fit() / "remap.png").string(), row))
      throw Error(Errc::io, "cannot write " + (layout.fit() / "remap.png").string());
  }
  return finish(layout.fit(), "fit-approx", tree, report);
}

StageResult run_sweep(const json& tree) {
  const ExperimentConfig cfg = experiment_config_from_json(tree);
  const StageLayout layout{cfg.output_dir};
  const std::string& param = cfg.sweep.param;
  json rows = json::array();
  std::ostringstream table;
  table << std::left << std::setw(10) << param << std::setw(12) << "mean_ap50" << std::setw(12) << "std"
        << "per_seed\n";

  for (double value : cfg.sweep.values) {
    std::vector<double> aps;
    json runs = json::array();
    for (uint64_t seed : cfg.sweep.seeds) {
      const fs::path seed_root = layout.sweep() / ("seed_" + std::to_string(seed));
      json seed_tree = tree;
      seed_tree["seed"] = seed;
      seed_tree["output_dir"] = seed_root.string();
      const ExperimentConfig seed_cfg = experiment_config_from_json(seed_tree);
      const StageLayout seed_layout{seed_root};

      if (!up_to_date(seed_layout.data(), seed_tree)) run_synth_gen(seed_tree);
      const DomainDataset ds = load_matching_dataset(seed_layout.data(), seed_cfg);
      if (!up_to_date(seed_layout.base(), seed_tree)) run_train_base(seed_tree);

      json run_tree = seed_tree;
      if (param == "N") run_tree["aggregator"]["num_transforms"] = static_cast<int>(std::lround(value));
      if (param == "lambda") run_tree["adapt"]["lambda"] = value;
      if (param == "tau") run_tree["adapt"]["tau"] = value;
      const ExperimentConfig run_cfg = experiment_config_from_json(run_tree);

      // The aggregator depends on N only; lambda/tau sweeps share one per seed.
      const fs::path agg_dir = param == "N" ? seed_root / ("aggregator_N" + value_tag(value)) : seed_layout.aggregator();
      const json agg_tree = param == "N" ? run_tree : seed_tree;
      if (!up_to_date(agg_dir, agg_tree)) {
        const TrainOutcome agg =
            train_aggregator_into(experiment_config_from_json(agg_tree), agg_tree, ds, seed_layout.base() / "model.ckpt", agg_dir);
        finish(agg_dir, "train-aggregator", agg_tree, agg.metrics);
      }

      const fs::path run_dir = seed_root / (param + "_" + value_tag(value));
      json metrics;
      if (up_to_date(run_dir, run_tree)) {
        metrics = read_json(run_dir / "metrics.json");
      } else {
        metrics = adapt_into(run_cfg, run_tree, ds, agg_dir / "model.ckpt", "train-aggregator", run_dir);
        finish(run_dir, "adapt", run_tree, metrics);
      }
      const double ap = metrics.at("teacher_target_ap50").get<double>();
      aps.push_back(ap);
      runs.push_back({{"seed", seed}, {"target_ap50", ap}, {"dir", run_dir.string()}});
    }
    rows.push_back({{"value", value}, {"mean", mean_of(aps)}, {"std", std_of(aps)}, {"runs", runs}});
    table << std::left << std::setw(10) << value << std::setw(12) << std::fixed << std::setprecision(4)
          << mean_of(aps) << std::setw(12) << std_of(aps);
    for (double a : aps) table << a << ' ';
    table << '\n';
    table.unsetf(std::ios::fixed);
  }

  json summary{{"param", param}, {"rows", rows}};
  write_json(layout.sweep() / "summary.json", summary);
  std::ofstream(layout.sweep() / "summary.txt") << table.str();
  plot_sweep(summary, layout.sweep());
  return finish(layout.sweep(), "sweep", tree, summary);
}

}  // namespace geoshift
