#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "mvdi/blockio.hpp"
#include "mvdi/depthio.hpp"
#include "mvdi/error.hpp"
#include "mvdi/features.hpp"
#include "mvdi/minicnn.hpp"
#include "mvdi/pipeline.hpp"
#include "mvdi/proposal.hpp"
#include "mvdi/rankpool.hpp"
#include "mvdi/viewsynth.hpp"

namespace fs = std::filesystem;
using namespace mvdi;

namespace {

std::vector<double> parse_doubles(const std::string& s) {
  return ConfigMap::parse("x = " + s).get_double_list("x", {});
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open labels file: " + path);
  std::vector<int> out;
  int v = 0;
  while (is >> v) out.push_back(v);
  if (!is.eof()) throw DataError("malformed labels file: " + path);
  return out;
}

features::Matrix read_features(const std::string& path) {
  features::Matrix m;
  m.data = blockio::read_matrix(path, m.rows, m.cols);
  return m;
}

void write_image(const DynamicImage& img, const std::string& path) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_pgm8(img.width, img.height, img.pixels, path);
}

// A small random network and batch for the gradient check.
struct Probe {
  cnn::MultiStreamModel model;
  cnn::Batch batch;
  int group = 0;
};

Probe random_probe(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  cnn::Arch arch;
  arch.input_size = pick(6, 10);
  int size = arch.input_size;
  const int nconv = pick(1, 2);
  for (int i = 0; i < nconv; ++i) {
    cnn::ConvSpec c;
    c.filters = pick(2, 3);
    c.pad = pick(0, 1);
    c.kernel = std::min(pick(2, 3), size + 2 * c.pad);
    c.stride = pick(1, 2);
    int out = (size + 2 * c.pad - c.kernel) / c.stride + 1;
    if (out < 1) {
      c.stride = 1;
      out = size + 2 * c.pad - c.kernel + 1;
    }
    c.pool = out >= 4 && pick(0, 1) == 1;
    size = c.pool ? out / 2 : out;
    arch.conv.push_back(c);
  }
  arch.hidden = {pick(3, 6)};
  const int groups = pick(1, 3);
  const int classes = pick(2, 4);
  Probe p{cnn::init_model(arch, groups, classes, rng()), {}, pick(0, groups - 1)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Zero biases put dead units exactly on the rectifier kink.
  for (auto& l : p.model.shared.layers) {
    for (auto& b : l.bias) b = 0.2 * u(rng) - 0.05;
  }
  for (auto& s : p.model.streams) {
    for (auto& l : s.layers) {
      for (auto& b : l.bias) b = 0.2 * u(rng) - 0.05;
    }
  }
  const int n = pick(2, 4);
  for (int i = 0; i < n; ++i) {
    std::vector<double> img(static_cast<std::size_t>(arch.input_size) * arch.input_size);
    for (auto& v : img) v = u(rng);
    p.batch.images.push_back(std::move(img));
    p.batch.labels.push_back(pick(0, classes - 1));
  }
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view dynamic images for depth-video action recognition"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic depth-video corpus");
  SynthConfig sc;
  std::string synth_out;
  std::uint64_t synth_seed = 1;
  std::string synth_views = "0";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", sc.num_classes, "Number of classes")->capture_default_str();
  synth->add_option("--per-class", sc.samples_per_class, "Samples per class")->capture_default_str();
  synth->add_option("--subjects", sc.num_subjects)->capture_default_str();
  synth->add_option("--width", sc.width)->capture_default_str();
  synth->add_option("--height", sc.height)->capture_default_str();
  synth->add_option("--frames", sc.frames)->capture_default_str();
  synth->add_option("--noise", sc.noise)->capture_default_str();
  synth->add_option("--views", synth_views, "Camera angles in degrees, comma separated")->capture_default_str();
  synth->add_option("--seed", synth_seed)->capture_default_str();

  // project
  auto* project = app.add_subcommand("project", "Synthesize a video seen from another viewpoint");
  std::string video_dir, out_path;
  ViewSpec view;
  ProjectionConfig pcfg;
  project->add_option("--video", video_dir)->required();
  project->add_option("--alpha", view.alpha)->capture_default_str();
  project->add_option("--beta", view.beta)->capture_default_str();
  project->add_option("--depth-scale", pcfg.depth_scale)->capture_default_str();
  project->add_option("--hole-fill", pcfg.hole_fill_radius)->capture_default_str();
  project->add_option("--out", out_path)->required();

  // pool
  auto* pool = app.add_subcommand("pool", "Rank-pool a video into a dynamic image");
  PoolConfig pool_cfg;
  std::string variant = "approx-prefix", dump_u;
  pool->add_option("--video", video_dir)->required();
  pool->add_option("--variant", variant)
      ->check(CLI::IsMember({"exact", "approx-prefix", "approx-frames"}))
      ->capture_default_str();
  pool->add_option("--lambda", pool_cfg.lambda)->capture_default_str();
  pool->add_option("--max-iters", pool_cfg.max_iters)->capture_default_str();
  pool->add_option("--step-size", pool_cfg.step_size);
  pool->add_option("--out", out_path, "Output 8-bit PGM")->required();
  pool->add_option("--dump-u", dump_u, "Write u as (u64 rows, u64 cols, f64...) little-endian");

  // dmm
  auto* dmm = app.add_subcommand("dmm", "Depth motion map of a video");
  double epsilon = 50.0;
  dmm->add_option("--video", video_dir)->required();
  dmm->add_option("--epsilon", epsilon)->capture_default_str();
  dmm->add_option("--out", out_path, "Output 8-bit PGM")->required();

  // propose
  auto* propose = app.add_subcommand("propose", "Crop a video to its action proposal");
  std::string boxes_csv, skeleton_csv;
  int margin = -1;
  propose->add_option("--video", video_dir)->required();
  auto* boxes_opt = propose->add_option("--boxes", boxes_csv);
  auto* skel_opt = propose->add_option("--from-skeleton", skeleton_csv);
  boxes_opt->excludes(skel_opt);
  propose->add_option("--margin", margin, "Pixels; default scales 30 px at 320 px width");
  propose->add_option("--out", out_path)->required();

  // train
  auto* train = app.add_subcommand("train", "Train the multi-stream network on a manifest");
  std::string manifest, config_path;
  int ngroups = 5, iters = 100;
  std::uint64_t seed = 7;
  train->add_option("--manifest", manifest)->required();
  train->add_option("--config", config_path, "Pipeline config supplying the remaining settings");
  train->add_option("--groups", ngroups, "Use view groups 1..N")->check(CLI::Range(1, 5))->capture_default_str();
  train->add_option("--iters", iters)->capture_default_str();
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--out", out_path)->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the network gradients");
  int gc_models = 20;
  gradcheck->add_option("--seed", seed)->capture_default_str();
  gradcheck->add_option("--models", gc_models)->capture_default_str();

  // classify
  auto* classify = app.add_subcommand("classify", "PCA + linear SVM on stored feature matrices");
  std::string feat_path, labels_path, test_feat_path, test_labels_path, c_grid_str;
  int pca_dim = 1000, folds = 5;
  classify->add_option("--features", feat_path)->required();
  classify->add_option("--labels", labels_path, "One integer label per line")->required();
  classify->add_option("--test-features", test_feat_path);
  classify->add_option("--test-labels", test_labels_path);
  classify->add_option("--pca-dim", pca_dim)->capture_default_str();
  classify->add_option("--c-grid", c_grid_str, "Comma separated; default 2^-5,2^-3,...,2^5");
  classify->add_option("--folds", folds)->capture_default_str();
  classify->add_option("--seed", seed)->capture_default_str();
  classify->add_option("--out", out_path, "Directory for pca.bin and svm.bin");

  // run / ablate
  auto* run_cmd = app.add_subcommand("run", "Train and evaluate from a config file");
  run_cmd->add_option("--config", config_path)->required();
  auto* ablate = app.add_subcommand("ablate", "Run one ablation axis from a config file");
  std::string axis;
  ablate->add_option("--config", config_path)->required();
  ablate->add_option("--axis", axis)
      ->check(CLI::IsMember({"representation", "view_groups", "proposal", "classifier"}))
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) {
      sc.camera_views = parse_doubles(synth_views);
      const auto m = synth_dataset(sc, synth_seed, synth_out);
      std::cout << "wrote " << m.records.size() << " samples to " << synth_out << "\n";
    } else if (*project) {
      view.validate();
      const auto video = load_video(video_dir);
      save_video(project_video(video, {view}, pcfg).front(), out_path);
    } else if (*pool) {
      pool_cfg.variant = parse_pool_variant(variant);
      const auto u = rank_pool(load_video(video_dir), pool_cfg);
      write_image(to_dynamic_image(u), out_path);
      if (!dump_u.empty()) {
        blockio::write_matrix(dump_u, static_cast<std::size_t>(u.height), static_cast<std::size_t>(u.width), u.u);
      }
    } else if (*dmm) {
      write_image(compute_dmm(load_video(video_dir), epsilon), out_path);
    } else if (*propose) {
      const auto video = load_video(video_dir);
      std::vector<BBox> boxes;
      if (!boxes_csv.empty()) boxes = load_boxes(boxes_csv);
      else if (!skeleton_csv.empty()) boxes = boxes_from_skeleton(load_skeleton(skeleton_csv));
      else throw ConfigError("propose needs --boxes or --from-skeleton");
      const int m = margin >= 0 ? margin : scaled_margin(video.width());
      const auto cube = extend_cube(merge_boxes(boxes), m, video.width(), video.height());
      save_video(crop_video(video, cube), out_path);
      std::cout << "cube x=[" << cube.x0 << "," << cube.x1 << ") y=[" << cube.y0 << "," << cube.y1
                << ") t=[" << cube.t0 << "," << cube.t1 << "]\n";
    } else if (*train) {
      PipelineConfig cfg;
      if (!config_path.empty()) cfg = PipelineConfig::load(config_path);
      cfg.manifest = manifest;
      cfg.groups.clear();
      for (int g = 1; g <= ngroups; ++g) cfg.groups.push_back(g);
      cfg.train.iters = iters;
      cfg.train.seed = seed;
      cfg.validate();
      std::vector<std::string> ids;
      for (const auto& r : load_manifest(manifest).records) ids.push_back(r.sample_id);
      std::vector<cnn::LossRecord> trace;
      const auto model = train_model(cfg, ids, worker_count(), &trace);
      cnn::save_model(model, out_path);
      for (const auto& r : trace) {
        if (r.iteration == iters - 1) std::printf("group %d final loss %.6f\n", cfg.groups[r.group], r.loss);
      }
    } else if (*gradcheck) {
      double worst = 0.0;
      int checked = 0, kinks = 0;
      for (int i = 0; i < gc_models; ++i) {
        const auto p = random_probe(seed + static_cast<std::uint64_t>(i));
        for (const auto& b : cnn::gradient_check(p.model, p.group, p.batch, 1e-3)) {
          std::printf("model %2d %-18s max_rel_error %.3e checked %d kinks %d\n", i, b.name.c_str(),
                      b.max_rel_error, b.checked, b.kinks);
          checked += b.checked;
          kinks += b.kinks;
          worst = std::max(worst, b.max_rel_error);
        }
      }
      std::printf("worst %.3e (threshold 1e-4) over %d entries, %d at kinks\n", worst, checked, kinks);
      if (!(worst < 1e-4)) throw NumericError("gradient check failed");
    } else if (*classify) {
      const auto x = read_features(feat_path);
      const auto y = read_labels(labels_path);
      if (y.size() != x.rows) throw DataError("labels and features disagree on sample count");
      const auto grid = c_grid_str.empty() ? features::default_c_grid() : parse_doubles(c_grid_str);
      if (pca_dim < 1) throw ConfigError("--pca-dim must be >= 1");
      const auto k = features::default_pca_dim(x.rows, x.cols, static_cast<std::size_t>(pca_dim));
      const auto pca = features::pca_fit(x, k);
      const auto xp = features::pca_transform(pca, x);
      const auto cv = features::svm_cv_select(xp, y, grid, folds, seed);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        std::printf("C %-10s cv_accuracy %.4f\n", format_double(grid[i]).c_str(), cv.mean_accuracy[i]);
      }
      std::printf("selected C %s, pca dim %zu\n", format_double(cv.best_c).c_str(), k);
      const auto svm = features::svm_train(xp, y, cv.best_c, seed);
      if (!test_feat_path.empty()) {
        const auto xt = read_features(test_feat_path);
        if (xt.cols != x.cols) throw DataError("test features have a different dimension");
        std::vector<int> yt;
        if (!test_labels_path.empty()) yt = read_labels(test_labels_path);
        int correct = 0;
        for (std::size_t i = 0; i < xt.rows; ++i) {
          const int pred = features::svm_predict(svm, features::pca_transform(pca, xt.row(i))).label;
          std::printf("%zu %d\n", i, pred);
          if (i < yt.size()) correct += pred == yt[i];
        }
        if (!yt.empty()) std::printf("accuracy %.6f\n", static_cast<double>(correct) / xt.rows);
      }
      if (!out_path.empty()) {
        fs::create_directories(out_path);
        features::save_pca(pca, (fs::path(out_path) / "pca.bin").string());
        features::save_svm(svm, (fs::path(out_path) / "svm.bin").string());
      }
    } else if (*run_cmd) {
      const auto rep = run(PipelineConfig::load(config_path), worker_count());
      std::cout << format_report(rep) << report_timings(rep);
    } else if (*ablate) {
      const auto ax = parse_axis(axis);
      const auto rows = run_ablation(PipelineConfig::load(config_path), ax, worker_count());
      std::cout << format_ablation(ax, rows);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
