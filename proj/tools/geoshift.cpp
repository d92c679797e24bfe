// geoshift: staged experiment runner.
//
//   geoshift [--config FILE] [--set key=value]... [--output-dir DIR] [--seed S] <subcommand> [options]
//
// Config precedence: defaults < file < GEOSHIFT_OUTPUT_DIR / GEOSHIFT_SEED < flags.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "geoshift/config.hpp"
#include "geoshift/error.hpp"
#include "geoshift/pipeline.hpp"
#include "geoshift/plot.hpp"

using namespace geoshift;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

int exit_code(Errc code) {
  switch (code) {
    case Errc::schema:
    case Errc::configuration:
      return 2;
    case Errc::dependency:
      return 3;
    case Errc::io:
      return 4;
    default:
      return 1;
  }
}

void report_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", {{"code", code}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable-homography domain adaptation experiments"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file;
  std::vector<std::string> overrides;
  std::string output_dir;
  std::optional<uint64_t> seed;
  app.add_option("--config", config_file, "JSON config or a stage manifest");
  app.add_option("--set", overrides, "override as dotted.key=value (repeatable)");
  app.add_option("--output-dir", output_dir, "artifact root (env GEOSHIFT_OUTPUT_DIR)");
  app.add_option("--seed", seed, "experiment seed (env GEOSHIFT_SEED)");

  auto* synth = app.add_subcommand("synth-gen", "render the source/target datasets");
  auto* base = app.add_subcommand("train-base", "train the source-only detector");
  auto* agg = app.add_subcommand("train-aggregator", "train the aggregator over random homography sets");

  auto* adapt_cmd = app.add_subcommand("adapt", "mean-teacher adaptation");
  std::string start = "aggregator", run_name = "adapt";
  adapt_cmd->add_option("--from", start, "aggregator (learned homographies) or base (plain mean teacher)")
      ->check(CLI::IsMember({"aggregator", "base"}));
  adapt_cmd->add_option("--name", run_name, "output subdirectory");

  auto* eval_cmd = app.add_subcommand("eval", "AP@0.5 of a checkpoint on a split");
  std::string checkpoint, split = "target_val", eval_name;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--split", split, "source_train, source_val or target_val");
  eval_cmd->add_option("--name", eval_name, "report file stem");

  auto* fit_cmd = app.add_subcommand("fit-approx", "fit N homographies to a dense mapping");
  std::string mapping;
  std::vector<double> src_fov, dst_fov;
  std::optional<int> fit_n;
  std::vector<int> grid;
  bool no_visual = false;
  fit_cmd->add_option("--mapping", mapping, "fov or viewpoint")->check(CLI::IsMember({"fov", "viewpoint"}));
  fit_cmd->add_option("--src-fov", src_fov, "source field of view x,y in degrees")->expected(2)->delimiter(',');
  fit_cmd->add_option("--dst-fov", dst_fov, "destination field of view x,y in degrees")->expected(2)->delimiter(',');
  fit_cmd->add_option("-n,--n", fit_n, "number of homographies");
  fit_cmd->add_option("--grid", grid, "rows,cols")->expected(2)->delimiter(',');
  fit_cmd->add_flag("--no-visualize", no_visual, "skip the remap image");

  auto* sweep_cmd = app.add_subcommand("sweep", "adaptation sweep over N, lambda or tau");
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::vector<uint64_t> sweep_seeds;
  sweep_cmd->add_option("--param", sweep_param, "N, lambda or tau")->check(CLI::IsMember({"N", "lambda", "tau"}));
  sweep_cmd->add_option("--values", sweep_values, "comma separated values")->delimiter(',');
  sweep_cmd->add_option("--seeds", sweep_seeds, "comma separated seeds")->delimiter(',');

  auto* plot_cmd = app.add_subcommand("plot", "render traces and sweep summaries");
  std::string trace_path, summary_path, plot_out;
  plot_cmd->add_option("--trace", trace_path, "adaptation trace.jsonl (default <output>/adapt/trace.jsonl)");
  plot_cmd->add_option("--summary", summary_path, "sweep summary.json");
  plot_cmd->add_option("--out", plot_out, "image directory (default <output>/plots)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    json tree = default_config_tree();
    if (!config_file.empty()) {
      const fs::path path(config_file);
      if (!fs::exists(path)) throw Error(Errc::io, "config file not found: " + config_file);
      tree = merge_config(tree, config_tree_of(read_json(path)));
    }
    if (const char* env = std::getenv("GEOSHIFT_OUTPUT_DIR")) tree["output_dir"] = std::string(env);
    if (const char* env = std::getenv("GEOSHIFT_SEED")) apply_override(tree, std::string("seed=") + env);
    for (const auto& o : overrides) apply_override(tree, o);
    if (!output_dir.empty()) tree["output_dir"] = output_dir;
    if (seed) tree["seed"] = *seed;

    if (*fit_cmd) {
      if (!mapping.empty()) tree["fit"]["mapping"] = mapping;
      if (!src_fov.empty()) tree["fit"]["src_fov"] = src_fov;
      if (!dst_fov.empty()) tree["fit"]["dst_fov"] = dst_fov;
      if (fit_n) tree["fit"]["n"] = *fit_n;
      if (!grid.empty()) tree["fit"]["grid"] = grid;
    }
    if (*sweep_cmd) {
      if (!sweep_param.empty()) tree["sweep"]["param"] = sweep_param;
      if (!sweep_values.empty()) tree["sweep"]["values"] = sweep_values;
      if (!sweep_seeds.empty()) tree["sweep"]["seeds"] = sweep_seeds;
    }
    experiment_config_from_json(tree);  // validate before any work
    const StageLayout layout{tree.at("output_dir").get<std::string>()};
    write_json(layout.root / "effective_config.json", tree);

    StageResult result;
    if (*synth) result = run_synth_gen(tree);
    if (*base) result = run_train_base(tree);
    if (*agg) result = run_train_aggregator(tree);
    if (*adapt_cmd) result = run_adapt(tree, start == "base" ? AdaptStart::base : AdaptStart::aggregator, run_name);
    if (*eval_cmd) result = run_eval(tree, checkpoint, split, eval_name);
    if (*fit_cmd) result = run_fit_approx(tree, !no_visual);
    if (*sweep_cmd) result = run_sweep(tree);
    if (*plot_cmd) {
      const fs::path out = plot_out.empty() ? layout.plots() : fs::path(plot_out);
      std::vector<fs::path> files;
      if (summary_path.empty() || !trace_path.empty()) {
        const fs::path trace = trace_path.empty() ? layout.adapt() / "trace.jsonl" : fs::path(trace_path);
        if (!fs::exists(trace)) throw Error(Errc::dependency, "missing " + trace.string() + " (run adapt first)");
        files = plot_trace(trace, out);
      }
      if (!summary_path.empty()) {
        if (!fs::exists(summary_path))
          throw Error(Errc::dependency, "missing " + summary_path + " (run sweep first)");
        files.push_back(plot_sweep(read_json(summary_path), out));
      }
      json written = json::array();
      for (const auto& f : files) written.push_back(f.string());
      write_json(out / "manifest.json", make_manifest("plot", tree, {{"files", written}}));
      result = {out, {{"files", written}}};
    }
    std::cout << json{{"dir", result.dir.string()}, {"metrics", result.metrics}}.dump() << std::endl;
    return 0;
  } catch (const Error& e) {
    report_error(std::string(to_string(e.code())), e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
}
