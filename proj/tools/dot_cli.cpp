// Command-line front end: build, train, render, eval, calibrate, compress, stats.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "dot/calibration.hpp"
#include "dot/compress.hpp"
#include "dot/dataset.hpp"
#include "dot/error.hpp"
#include "dot/metrics.hpp"
#include "dot/optimizer.hpp"
#include "dot/parallel.hpp"
#include "dot/render.hpp"
#include "dot/signal.hpp"
#include "dot/toy_scene.hpp"
#include "dot/tree_io.hpp"

namespace fs = std::filesystem;

namespace {

struct DatasetFlags {
  std::string path;
  int downscale = 1;
  int max_views = 0;
};

dot::Vec3 parse_background(const std::string& name) {
  if (name == "white") return {1.0, 1.0, 1.0};
  if (name == "black") return {0.0, 0.0, 0.0};
  throw dot::ConfigError("background must be white or black, got '" + name + "'");
}

bool is_toy_spec(const std::string& path) { return fs::is_regular_file(path); }

std::vector<dot::View> load_split(const DatasetFlags& flags, const std::string& split,
                                  const dot::Vec3& background, int workers) {
  if (is_toy_spec(flags.path)) {
    dot::ToyDatasetSpec spec = dot::load_toy_dataset_spec(flags.path);
    spec.background = background;
    dot::ToyViews views = dot::make_toy_views(spec, workers);
    std::vector<dot::View>& chosen = split == "train" ? views.train : views.test;
    if (flags.max_views > 0 && chosen.size() > static_cast<std::size_t>(flags.max_views)) {
      chosen.resize(flags.max_views);
    }
    return std::move(chosen);
  }
  if (!fs::is_directory(flags.path)) {
    throw dot::LoadError(dot::LoadError::Kind::kMissingFile, "no dataset at " + flags.path);
  }
  dot::NerfLoadOptions options;
  options.downscale = flags.downscale;
  options.max_views = flags.max_views;
  options.background = background;
  return dot::load_nerf_synthetic(flags.path, split, options);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw dot::Error("cannot write " + path.string());
  out << text;
}

void ensure_distinct(const std::string& in, const std::string& out) {
  std::error_code ec;
  if (fs::exists(out) && fs::equivalent(in, out, ec)) {
    throw dot::ConfigError("output path must differ from the input tree");
  }
}

dot::SampleMode parse_sample_mode(const std::string& mode) {
  if (mode == "topk") return dot::SampleMode::kTopK;
  if (mode == "threshold") return dot::SampleMode::kThreshold;
  throw dot::ConfigError("gamma mode must be topk or threshold");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic sparse-octree radiance fields: build, train, calibrate, render"};
  app.require_subcommand(1);
  int threads = dot::default_worker_count();
  app.add_option("--threads", threads, "Worker threads (default: DOT_THREADS or all cores)")
      ->check(CLI::PositiveNumber);

  // build
  auto* build = app.add_subcommand("build", "Create a dense tree from a toy spec or dataset");
  std::string build_scene, build_out;
  int build_depth = 6, build_basis = 1, build_max_depth = dot::kDefaultMaxDepth;
  double build_sigma = 0.1, build_half = 1.5;
  build->add_option("--scene", build_scene, "Toy spec JSON or NeRF-synthetic directory")->required();
  build->add_option("--depth", build_depth, "Uniform depth")->required();
  build->add_option("--out", build_out, "Output tree")->required();
  build->add_option("--basis", build_basis, "SH basis count (1, 4, 9, 16)");
  build->add_option("--max-depth", build_max_depth, "Depth cap for sampling");
  build->add_option("--init-sigma", build_sigma, "Initial density for dataset trees");
  build->add_option("--bounds-half", build_half, "Half extent of dataset trees");

  // train
  auto* train = app.add_subcommand("train", "Optimize a tree with interval calibration");
  std::string train_tree, train_out, train_history, train_signal = "q", train_gamma_mode = "topk";
  std::string train_bg = "white", train_reports, train_dump;
  DatasetFlags train_data;
  dot::TrainConfig cfg;
  int holdout_views = 0;
  train->add_option("--tree", train_tree, "Input tree")->required();
  train->add_option("--dataset", train_data.path, "Dataset directory or toy spec")->required();
  train->add_option("--epochs", cfg.epochs, "Epochs");
  train->add_option("--interval", cfg.interval, "Epochs between calibrations");
  train->add_option("--tau", cfg.calibration.tau, "Prune threshold");
  train->add_option("--gamma", cfg.calibration.gamma, "Sampling fraction (0 disables)");
  train->add_option("--gamma-mode", train_gamma_mode, "topk or threshold");
  train->add_flag("--recursive", cfg.calibration.recursive, "Recursive pruning");
  train->add_option("--signal", train_signal, "q or sigma");
  train->add_option("--seed", cfg.seed, "Shuffle seed");
  train->add_option("--batch-size", cfg.batch_size, "Rays per batch");
  train->add_option("--lr-sigma", cfg.optimizer.lr_sigma, "Density learning rate");
  train->add_option("--lr-sh", cfg.optimizer.lr_sh, "SH learning rate");
  train->add_flag("--reset-optimizer", cfg.reset_optimizer_on_mutation,
                  "Zero RMSProp state at each calibration instead of remapping");
  train->add_option("--holdout-views", holdout_views, "Held-out views for PSNR (0 = all)");
  train->add_option("--downscale", train_data.downscale, "Image downscale factor");
  train->add_option("--max-views", train_data.max_views, "Training views to load (0 = all)");
  train->add_option("--bg", train_bg, "white or black");
  train->add_option("--out", train_out, "Output tree")->required();
  train->add_option("--history", train_history, "History CSV");
  train->add_option("--reports", train_reports, "Calibration reports (JSON lines)");
  train->add_option("--signal-dump", train_dump, "Signal CSV for the final tree");

  // render
  auto* render = app.add_subcommand("render", "Render PNG views of a tree");
  std::string render_tree, render_camera, render_out, render_bg = "white";
  int render_w = 64, render_h = 64;
  double render_radius = 3.2, render_fov = 0.69;
  render->add_option("--tree", render_tree, "Tree")->required();
  render->add_option("--camera", render_camera, "Transforms JSON or orbit:N")->required();
  render->add_option("--out", render_out, "Output directory")->required();
  render->add_option("--bg", render_bg, "white or black");
  render->add_option("--width", render_w, "Image width for orbit or size-less JSON");
  render->add_option("--height", render_h, "Image height for orbit or size-less JSON");
  render->add_option("--radius", render_radius, "Orbit radius");
  render->add_option("--fov", render_fov, "Orbit horizontal field of view (radians)");

  // eval
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM of a tree against a dataset split");
  std::string eval_tree, eval_split = "test", eval_report, eval_bg = "white";
  DatasetFlags eval_data;
  eval->add_option("--tree", eval_tree, "Tree")->required();
  eval->add_option("--dataset", eval_data.path, "Dataset directory or toy spec")->required();
  eval->add_option("--split", eval_split, "Split name");
  eval->add_option("--report", eval_report, "Report JSON")->required();
  eval->add_option("--downscale", eval_data.downscale, "Image downscale factor");
  eval->add_option("--max-views", eval_data.max_views, "Views to evaluate (0 = all)");
  eval->add_option("--bg", eval_bg, "white or black");

  // calibrate
  auto* calib = app.add_subcommand("calibrate", "One offline calibration from a signal dump");
  std::string calib_tree, calib_dump, calib_out, calib_gamma_mode = "topk";
  dot::CalibrationConfig calib_cfg;
  calib->add_option("--tree", calib_tree, "Tree")->required();
  calib->add_option("--signal-dump", calib_dump, "Signal CSV")->required();
  calib->add_option("--tau", calib_cfg.tau, "Prune threshold");
  calib->add_option("--gamma", calib_cfg.gamma, "Sampling fraction");
  calib->add_option("--gamma-mode", calib_gamma_mode, "topk or threshold");
  calib->add_flag("--recursive", calib_cfg.recursive, "Recursive pruning");
  calib->add_option("--out", calib_out, "Output tree")->required();

  // compress
  auto* compress = app.add_subcommand("compress", "Median-cut SH quantization");
  std::string comp_tree, comp_out;
  std::size_t palette = 256;
  compress->add_option("--tree", comp_tree, "Tree")->required();
  compress->add_option("--palette", palette, "Palette size")->check(CLI::PositiveNumber);
  compress->add_option("--out", comp_out, "Output tree")->required();

  // stats
  auto* stats = app.add_subcommand("stats", "Print tree statistics");
  std::string stats_tree;
  stats->add_option("--tree", stats_tree, "Tree")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*build) {
      dot::SparseOctree tree = [&] {
        if (is_toy_spec(build_scene)) {
          const dot::ToyDatasetSpec spec = dot::load_toy_dataset_spec(build_scene);
          return dot::generate_toy_scene(spec.scene, build_depth, build_basis, build_max_depth).tree;
        }
        if (!fs::is_directory(build_scene)) {
          throw dot::LoadError(dot::LoadError::Kind::kMissingFile, "no scene at " + build_scene);
        }
        dot::LeafPayload init{static_cast<float>(build_sigma),
                              std::vector<float>(3 * static_cast<std::size_t>(build_basis), 0.0f)};
        return dot::build_dense(build_depth, {{0.0, 0.0, 0.0}, build_half}, build_basis,
                                dot::constant_payload(init), build_max_depth);
      }();
      dot::save_tree(tree, build_out);
      std::printf("leaf_count=%zu\n", tree.leaf_count());
    } else if (*train) {
      ensure_distinct(train_tree, train_out);
      dot::SparseOctree tree = dot::load_tree(train_tree);
      cfg.signal = train_signal == "q" ? dot::SignalTarget::kRayWeightQ
                   : train_signal == "sigma"
                       ? dot::SignalTarget::kDensitySigma
                       : throw dot::ConfigError("signal must be q or sigma");
      cfg.calibration.sample_mode = parse_sample_mode(train_gamma_mode);
      cfg.background = parse_background(train_bg);
      cfg.workers = threads;
      cfg.validate();
      const std::vector<dot::View> train_views =
          load_split(train_data, "train", cfg.background, threads);
      DatasetFlags holdout_flags = train_data;
      holdout_flags.max_views = holdout_views;
      std::vector<dot::View> holdout;
      if (is_toy_spec(train_data.path) ||
          fs::exists(fs::path(train_data.path) / "transforms_test.json")) {
        holdout = load_split(holdout_flags, "test", cfg.background, threads);
      }
      const dot::RayDataset rays = dot::RayDataset::from_views(train_views);
      const dot::TrainHistory history = dot::train(tree, rays, holdout, cfg);
      tree = tree.compacted();
      dot::save_tree(tree, train_out);
      if (!train_history.empty()) {
        std::ofstream out(train_history, std::ios::trunc);
        if (!out) throw dot::Error("cannot write " + train_history);
        history.write_csv(out);
      }
      if (!train_reports.empty()) {
        std::string lines;
        for (const auto& r : history.calibrations) lines += r.to_json_line() + "\n";
        write_text(train_reports, lines);
      }
      if (!train_dump.empty()) {
        dot::SignalBuffer buffer(cfg.signal, tree);
        const std::size_t step = std::max<std::size_t>(cfg.batch_size, 1);
        for (std::size_t start = 0; start < rays.size(); start += step) {
          const std::size_t n = std::min(step, rays.size() - start);
          buffer.accumulate(dot::render_and_backprop(
                                tree, std::span(rays.rays).subspan(start, n),
                                std::span(rays.targets).subspan(start, n), cfg.background,
                                cfg.render, threads)
                                .signal);
        }
        std::ofstream out(train_dump, std::ios::trunc);
        if (!out) throw dot::Error("cannot write " + train_dump);
        buffer.write_csv(tree, out);
      }
      std::printf("epochs=%zu leaf_count=%zu\n", history.epochs.size(), tree.leaf_count());
    } else if (*render) {
      const dot::SparseOctree tree = dot::load_tree(render_tree);
      const dot::Vec3 bg = parse_background(render_bg);
      std::vector<dot::Camera> cameras;
      if (render_camera.rfind("orbit:", 0) == 0) {
        int n = 0;
        try {
          n = std::stoi(render_camera.substr(6));
        } catch (const std::exception&) {
          throw dot::ConfigError("orbit camera spec must be orbit:N");
        }
        if (n < 1) throw dot::ConfigError("orbit camera count must be positive");
        cameras = dot::orbit_cameras(n, render_radius, render_w, render_h, render_fov);
      } else {
        cameras = dot::load_cameras_json(render_camera, render_w, render_h);
      }
      fs::create_directories(render_out);
      for (std::size_t i = 0; i < cameras.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "view_%03zu.png", i);
        dot::write_png(fs::path(render_out) / name,
                       dot::render_image(tree, cameras[i], bg, {}, threads));
      }
      std::printf("views=%zu\n", cameras.size());
    } else if (*eval) {
      const dot::SparseOctree tree = dot::load_tree(eval_tree);
      const dot::Vec3 bg = parse_background(eval_bg);
      const std::vector<dot::View> views = load_split(eval_data, eval_split, bg, threads);
      const dot::MetricReport report = dot::evaluate_views(tree, views, bg, {}, threads, true);
      write_text(eval_report, report.to_json() + "\n");
      std::printf("psnr=%.6f psnr_quantized=%.6f ssim=%.6f\n", report.psnr,
                  report.psnr_quantized, report.ssim);
    } else if (*calib) {
      ensure_distinct(calib_tree, calib_out);
      dot::SparseOctree tree = dot::load_tree(calib_tree);
      std::ifstream in(calib_dump);
      if (!in) throw dot::LoadError(dot::LoadError::Kind::kMissingFile, "missing " + calib_dump);
      dot::SignalBuffer buffer = dot::SignalBuffer::read_csv(tree, in);
      calib_cfg.sample_mode = parse_sample_mode(calib_gamma_mode);
      const dot::CalibrationReport report = dot::calibrate(tree, buffer, calib_cfg);
      dot::save_tree(tree, calib_out);
      std::printf("%s\n", report.to_json_line().c_str());
    } else if (*compress) {
      ensure_distinct(comp_tree, comp_out);
      const dot::SparseOctree tree = dot::load_tree(comp_tree);
      const dot::CompressionResult result = dot::compress_tree(tree, palette);
      dot::save_tree(result.tree, comp_out);
      std::printf("palette=%zu sh_bytes_before=%zu sh_bytes_after=%zu reduction=%.3f\n",
                  result.codebook.size() / (3 * static_cast<std::size_t>(tree.basis_count())),
                  result.sh_bytes_before, result.sh_bytes_after, result.reduction());
    } else if (*stats) {
      const dot::SparseOctree tree = dot::load_tree(stats_tree);
      const dot::TreeStats s = tree.stats();
      std::printf("leaf_count=%zu\ninternal_count=%zu\npayload_bytes=%zu\nbasis_count=%d\n"
                  "max_depth=%d\n",
                  s.leaf_count, s.internal_count, s.payload_bytes, tree.basis_count(),
                  tree.max_depth());
      for (std::size_t d = 0; d < s.depth_histogram.size(); ++d) {
        if (s.depth_histogram[d]) std::printf("depth[%zu]=%zu\n", d, s.depth_histogram[d]);
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
