#include "mvdi/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include "mvdi/error.hpp"
#include "mvdi/features.hpp"
#include "mvdi/proposal.hpp"

namespace fs = std::filesystem;

namespace mvdi {

std::string to_string(Representation r) {
  return r == Representation::dynamic_image ? "dynamic_image" : "dmm";
}

std::string to_string(Classifier c) { return c == Classifier::svm ? "svm" : "softmax_sum"; }

namespace {

Representation parse_representation(const std::string& s) {
  if (s == "dynamic_image") return Representation::dynamic_image;
  if (s == "dmm") return Representation::dmm;
  throw ConfigError("unknown representation '" + s + "'");
}

Classifier parse_classifier(const std::string& s) {
  if (s == "svm") return Classifier::svm;
  if (s == "softmax_sum") return Classifier::softmax_sum;
  throw ConfigError("unknown classifier '" + s + "'");
}

std::string to_string(SplitMode m) {
  switch (m) {
    case SplitMode::cross_subject: return "cross_subject";
    case SplitMode::cross_view: return "cross_view";
    case SplitMode::explicit_ids: return "explicit";
  }
  return "?";
}

SplitMode parse_split_mode(const std::string& s) {
  if (s == "cross_subject") return SplitMode::cross_subject;
  if (s == "cross_view") return SplitMode::cross_view;
  if (s == "explicit") return SplitMode::explicit_ids;
  throw ConfigError("unknown split mode '" + s + "'");
}

template <class T>
std::string join(const T& values, const std::function<std::string(typename T::value_type)>& f) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ",";
    out += f(v);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  return join(v, [](int x) { return std::to_string(x); });
}

std::string join_doubles(const std::vector<double>& v) {
  return join(v, [](double x) { return format_double(x); });
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "manifest", "split.mode", "split.train", "split.test", "split.train_ids", "split.test_ids",
      "views.groups", "projection.depth_scale", "projection.hole_fill_radius",
      "pool.variant", "pool.lambda", "pool.max_iters", "pool.step_size", "pool.seed",
      "segments.count", "segments.overlap", "proposal.enabled", "proposal.margin",
      "proposal.from_skeleton", "dmm.epsilon", "representation", "model.input_size",
      "model.conv", "model.dense", "train.learning_rate", "train.momentum",
      "train.weight_decay", "train.batch_size", "train.iters", "train.seed", "train.dropout",
      "train.precision", "classifier", "pca.dim", "pca.whiten", "features.l2_normalize",
      "features.test_time", "svm.c_grid", "svm.folds", "output_dir", "seed"};
  return keys;
}

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

}  // namespace

void PipelineConfig::validate() const {
  if (manifest.empty()) throw ConfigError("config: manifest is required");
  if (!fs::exists(manifest)) throw ConfigError("config: manifest not found: " + manifest);
  if (groups.empty()) throw ConfigError("config: views.groups must not be empty");
  const auto all = default_view_groups();
  std::set<int> seen;
  for (int g : groups) {
    if (g < 1 || g > static_cast<int>(all.size())) {
      throw ConfigError("config: view group " + std::to_string(g) + " does not exist");
    }
    if (!seen.insert(g).second) throw ConfigError("config: duplicate view group " + std::to_string(g));
  }
  projection.validate();
  pool.validate();
  segments.validate();
  arch.validate();
  train.validate();
  if (pca_dim < 1) throw ConfigError("config: pca.dim must be >= 1");
  if (cv_folds < 2) throw ConfigError("config: svm.folds must be >= 2");
  for (double c : c_grid) {
    if (!(c > 0)) throw ConfigError("config: svm.c_grid entries must be > 0");
  }
  if (!(dmm_epsilon >= 0)) throw ConfigError("config: dmm.epsilon must be >= 0");
}

PipelineConfig PipelineConfig::from_map(const ConfigMap& m, const std::string& base_dir) {
  for (const auto& [k, v] : m.values()) {
    if (!known_keys().count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
  PipelineConfig c;
  c.manifest = resolve_path(base_dir, m.get_string("manifest", ""));
  c.seed = static_cast<std::uint64_t>(m.get_int("seed", 7));

  c.split.mode = parse_split_mode(m.get_string("split.mode", "cross_subject"));
  if (c.split.mode == SplitMode::explicit_ids) {
    c.split.train_ids = m.get_string_list("split.train_ids");
    c.split.test_ids = m.get_string_list("split.test_ids");
  } else {
    for (int k : m.get_int_list("split.train", {})) c.split.train_keys.insert(k);
    for (int k : m.get_int_list("split.test", {})) c.split.test_keys.insert(k);
  }
  c.groups = m.get_int_list("views.groups", c.groups);
  std::sort(c.groups.begin(), c.groups.end());

  c.projection.depth_scale = m.get_double("projection.depth_scale", c.projection.depth_scale);
  c.projection.hole_fill_radius = m.get_int("projection.hole_fill_radius", c.projection.hole_fill_radius);

  c.pool.variant = parse_pool_variant(m.get_string("pool.variant", to_string(c.pool.variant)));
  c.pool.lambda = m.get_double("pool.lambda", c.pool.lambda);
  c.pool.max_iters = m.get_int("pool.max_iters", c.pool.max_iters);
  if (auto s = m.get("pool.step_size"); s && *s != "auto") c.pool.step_size = m.get_double("pool.step_size", 0);
  c.pool.seed = static_cast<std::uint64_t>(m.get_int("pool.seed", static_cast<int>(c.seed)));

  c.segments.num_segments = m.get_int("segments.count", c.segments.num_segments);
  c.segments.overlap = m.get_double("segments.overlap", c.segments.overlap);

  c.proposal = m.get_bool("proposal.enabled", c.proposal);
  if (auto s = m.get("proposal.margin"); s && *s != "auto") c.proposal_margin = m.get_int("proposal.margin", -1);
  c.proposal_from_skeleton = m.get_bool("proposal.from_skeleton", c.proposal_from_skeleton);
  c.dmm_epsilon = m.get_double("dmm.epsilon", c.dmm_epsilon);
  c.representation = parse_representation(m.get_string("representation", to_string(c.representation)));

  c.arch.input_size = m.get_int("model.input_size", c.arch.input_size);
  if (auto s = m.get("model.conv")) c.arch.conv = cnn::parse_conv_specs(*s);
  c.arch.hidden = m.get_int_list("model.dense", c.arch.hidden);

  c.train.learning_rate = m.get_double("train.learning_rate", c.train.learning_rate);
  c.train.momentum = m.get_double("train.momentum", c.train.momentum);
  c.train.weight_decay = m.get_double("train.weight_decay", c.train.weight_decay);
  c.train.batch_size = m.get_int("train.batch_size", c.train.batch_size);
  c.train.iters = m.get_int("train.iters", c.train.iters);
  c.train.seed = static_cast<std::uint64_t>(m.get_int("train.seed", static_cast<int>(c.seed)));
  c.train.dropout = m.get_double("train.dropout", c.train.dropout);
  const auto prec = m.get_string("train.precision", "f64");
  if (prec != "f32" && prec != "f64") throw ConfigError("train.precision must be f32 or f64");
  c.train.precision = prec == "f32" ? cnn::Precision::f32 : cnn::Precision::f64;

  c.classifier = parse_classifier(m.get_string("classifier", to_string(c.classifier)));
  c.pca_dim = m.get_int("pca.dim", c.pca_dim);
  c.pca_whiten = m.get_bool("pca.whiten", c.pca_whiten);
  c.l2_normalize = m.get_bool("features.l2_normalize", c.l2_normalize);
  const auto tt = m.get_string("features.test_time", "whole");
  if (tt == "whole") c.test_time = TestTimeImages::whole;
  else if (tt == "segment_mean") c.test_time = TestTimeImages::segment_mean;
  else throw ConfigError("features.test_time must be whole or segment_mean");
  c.c_grid = m.get_double_list("svm.c_grid", features::default_c_grid());
  c.cv_folds = m.get_int("svm.folds", c.cv_folds);
  c.output_dir = resolve_path(base_dir, m.get_string("output_dir", ""));
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::string& path) {
  return from_map(ConfigMap::load(path), fs::path(path).parent_path().string());
}

ConfigMap PipelineConfig::to_map() const {
  ConfigMap m;
  m.set("manifest", manifest);
  m.set("seed", std::to_string(seed));
  m.set("split.mode", to_string(split.mode));
  if (split.mode == SplitMode::explicit_ids) {
    m.set("split.train_ids", join(split.train_ids, [](std::string s) { return s; }));
    m.set("split.test_ids", join(split.test_ids, [](std::string s) { return s; }));
  } else {
    m.set("split.train", join_ints({split.train_keys.begin(), split.train_keys.end()}));
    if (!split.test_keys.empty()) m.set("split.test", join_ints({split.test_keys.begin(), split.test_keys.end()}));
  }
  m.set("views.groups", join_ints(groups));
  m.set("projection.depth_scale", format_double(projection.depth_scale));
  m.set("projection.hole_fill_radius", std::to_string(projection.hole_fill_radius));
  m.set("pool.variant", to_string(pool.variant));
  m.set("pool.lambda", format_double(pool.lambda));
  m.set("pool.max_iters", std::to_string(pool.max_iters));
  m.set("pool.step_size", pool.step_size ? format_double(*pool.step_size) : "auto");
  m.set("pool.seed", std::to_string(pool.seed));
  m.set("segments.count", std::to_string(segments.num_segments));
  m.set("segments.overlap", format_double(segments.overlap));
  m.set("proposal.enabled", proposal ? "true" : "false");
  m.set("proposal.margin", proposal_margin < 0 ? "auto" : std::to_string(proposal_margin));
  m.set("proposal.from_skeleton", proposal_from_skeleton ? "true" : "false");
  m.set("dmm.epsilon", format_double(dmm_epsilon));
  m.set("representation", to_string(representation));
  m.set("model.input_size", std::to_string(arch.input_size));
  m.set("model.conv", cnn::format_conv_specs(arch.conv));
  m.set("model.dense", join_ints(arch.hidden));
  m.set("train.learning_rate", format_double(train.learning_rate));
  m.set("train.momentum", format_double(train.momentum));
  m.set("train.weight_decay", format_double(train.weight_decay));
  m.set("train.batch_size", std::to_string(train.batch_size));
  m.set("train.iters", std::to_string(train.iters));
  m.set("train.seed", std::to_string(train.seed));
  m.set("train.dropout", format_double(train.dropout));
  m.set("train.precision", train.precision == cnn::Precision::f32 ? "f32" : "f64");
  m.set("classifier", to_string(classifier));
  m.set("pca.dim", std::to_string(pca_dim));
  m.set("pca.whiten", pca_whiten ? "true" : "false");
  m.set("features.l2_normalize", l2_normalize ? "true" : "false");
  m.set("features.test_time", test_time == TestTimeImages::whole ? "whole" : "segment_mean");
  m.set("svm.c_grid", join_doubles(c_grid));
  m.set("svm.folds", std::to_string(cv_folds));
  if (!output_dir.empty()) m.set("output_dir", output_dir);
  return m;
}

// ---------------------------------------------------------------------------
// Workers

int worker_count() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("MVDI_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  return hw;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::size_t first_index = n;
  std::mutex mu;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        // Report the lowest failing index so errors do not depend on scheduling.
        if (i < first_index) {
          first_index = i;
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  const int k = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
  for (int t = 0; t < k; ++t) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Run

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Prepared {
  int label = 0;
  std::vector<ViewImages> views;  // in flattened group-view order
  StageTimes times;
};

struct GroupLayout {
  std::vector<ViewGroup> groups;
  std::vector<ViewSpec> views;
  std::vector<std::vector<std::size_t>> view_index;  // per group -> indices into views
};

GroupLayout layout_for(const std::vector<int>& ids) {
  const auto all = default_view_groups();
  GroupLayout l;
  for (int id : ids) {
    const auto& g = all[static_cast<std::size_t>(id - 1)];
    l.groups.push_back(g);
    std::vector<std::size_t> idx;
    for (const auto& v : g.views) {
      idx.push_back(l.views.size());
      l.views.push_back(v);
    }
    l.view_index.push_back(std::move(idx));
  }
  return l;
}

Prepared prepare_sample(const SampleRecord& rec, const PipelineConfig& cfg, const GroupLayout& layout) {
  Prepared p;
  p.label = rec.label;
  DepthVideo video = load_video(rec.video_path);

  if (cfg.proposal) {
    const auto t0 = Clock::now();
    std::vector<BBox> boxes;
    if (cfg.proposal_from_skeleton || !rec.boxes_path) {
      if (!rec.skeleton_path) throw DataError("no boxes or skeleton sidecar for proposal");
      boxes = boxes_from_skeleton(load_skeleton(*rec.skeleton_path));
    } else {
      boxes = load_boxes(*rec.boxes_path);
    }
    const int margin = cfg.proposal_margin >= 0 ? cfg.proposal_margin : scaled_margin(video.width());
    const auto cube = extend_cube(merge_boxes(boxes), margin, video.width(), video.height());
    video = crop_video(video, cube);
    p.times.proposal = seconds_since(t0);
  }

  auto t0 = Clock::now();
  const auto projected = project_video(video, layout.views, cfg.projection);
  p.times.projection = seconds_since(t0);

  t0 = Clock::now();
  for (std::size_t v = 0; v < layout.views.size(); ++v) {
    ViewImages vi{layout.views[v], {}};
    const auto segs = temporal_segments(projected[v], cfg.segments);
    auto pool_one = [&](const DepthVideo& dv, int segment) {
      DynamicImage img = cfg.representation == Representation::dmm
                             ? compute_dmm(dv, cfg.dmm_epsilon)
                             : to_dynamic_image(rank_pool(dv, cfg.pool));
      img.view = layout.views[v];
      img.segment = segment;
      return img;
    };
    vi.images.push_back(pool_one(projected[v], -1));
    for (std::size_t s = 0; s < segs.size(); ++s) vi.images.push_back(pool_one(segs[s], static_cast<int>(s)));
    p.views.push_back(std::move(vi));
  }
  p.times.dynamic_image = seconds_since(t0);
  return p;
}

struct SampleFeatures {
  std::vector<double> feature;                     // concatenated over groups
  std::map<int, std::vector<double>> group_logits;  // keyed by stream index
};

SampleFeatures sample_features(const cnn::MultiStreamModel& model, const Prepared& p,
                               const PipelineConfig& cfg, const GroupLayout& layout) {
  SampleFeatures out;
  std::map<int, std::vector<double>> per_group;
  for (std::size_t g = 0; g < layout.groups.size(); ++g) {
    std::vector<double> feat(static_cast<std::size_t>(model.feature_dim()), 0.0);
    std::vector<double> logits(static_cast<std::size_t>(model.num_classes), 0.0);
    int count = 0;
    for (std::size_t vi : layout.view_index[g]) {
      const auto& imgs = p.views[vi].images;
      const std::size_t n_img = cfg.test_time == TestTimeImages::whole ? 1 : imgs.size();
      for (std::size_t k = 0; k < n_img; ++k) {
        const auto o = cnn::forward(model, static_cast<int>(g), cnn::prepare_input(imgs[k], cfg.arch.input_size));
        for (std::size_t j = 0; j < feat.size(); ++j) feat[j] += o.feature[j];
        for (std::size_t j = 0; j < logits.size(); ++j) logits[j] += o.logits[j];
        ++count;
      }
    }
    for (auto& v : feat) v /= count;
    for (auto& v : logits) v /= count;
    per_group[static_cast<int>(g)] = std::move(feat);
    out.group_logits[static_cast<int>(g)] = std::move(logits);
  }
  std::vector<int> keys;
  for (std::size_t g = 0; g < layout.groups.size(); ++g) keys.push_back(static_cast<int>(g));
  out.feature = features::concat_group_features(per_group, keys).values;
  return out;
}

std::vector<Prepared> prepare_all(const DatasetManifest& manifest, const std::vector<std::string>& ids,
                                  const PipelineConfig& cfg, const GroupLayout& layout, int workers) {
  std::vector<Prepared> out(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    const auto& rec = manifest.find(ids[i]);
    try {
      out[i] = prepare_sample(rec, cfg, layout);
    } catch (const DataError& e) {
      throw DataError("sample '" + rec.sample_id + "': " + e.what());
    } catch (const NumericError& e) {
      throw NumericError("sample '" + rec.sample_id + "': " + e.what());
    }
  });
  return out;
}

// Every image of every view in a group trains that group's stream.
cnn::MultiStreamModel train_prepared(const std::vector<Prepared>& train, const PipelineConfig& cfg,
                                     const GroupLayout& layout, int num_classes,
                                     std::vector<cnn::LossRecord>* trace = nullptr) {
  std::vector<cnn::GroupDataset> datasets(layout.groups.size());
  for (std::size_t g = 0; g < layout.groups.size(); ++g) {
    for (const auto& p : train) {
      for (std::size_t vi : layout.view_index[g]) {
        cnn::TrainItem item;
        item.label = p.label;
        for (const auto& img : p.views[vi].images) {
          item.candidates.push_back(cnn::prepare_input(img, cfg.arch.input_size));
        }
        datasets[g].push_back(std::move(item));
      }
    }
  }
  auto model = cnn::init_model(cfg.arch, static_cast<int>(layout.groups.size()), num_classes, cfg.train.seed);
  auto records = cnn::train_round_robin(model, datasets, cfg.train);
  if (trace) *trace = std::move(records);
  return model;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

}  // namespace

RunReport run(const PipelineConfig& cfg, int workers) {
  cfg.validate();
  if (workers <= 0) workers = worker_count();
  const auto manifest = load_manifest(cfg.manifest);
  const auto split = make_split(manifest, cfg.split);
  const auto layout = layout_for(cfg.groups);

  const auto train = prepare_all(manifest, split.train, cfg, layout, workers);
  const auto test = prepare_all(manifest, split.test, cfg, layout, workers);
  std::vector<cnn::LossRecord> trace;
  const auto model = train_prepared(train, cfg, layout, manifest.num_classes, &trace);

  RunReport rep;
  rep.config = cfg;
  if (rep.config.c_grid.empty()) rep.config.c_grid = features::default_c_grid();
  {
    const std::size_t tail = std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train.iters) / 10);
    std::vector<double> sum(layout.groups.size(), 0.0);
    std::vector<int> cnt(layout.groups.size(), 0);
    for (const auto& r : trace) {
      if (r.iteration >= cfg.train.iters - static_cast<int>(tail)) {
        sum[r.group] += r.loss;
        ++cnt[r.group];
      }
    }
    for (std::size_t g = 0; g < sum.size(); ++g) rep.final_losses.push_back(cnt[g] ? sum[g] / cnt[g] : 0.0);
  }

  auto extract_all = [&](const std::vector<Prepared>& samples, std::vector<double>* times) {
    std::vector<SampleFeatures> out(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t i) {
      const auto t0 = Clock::now();
      out[i] = sample_features(model, samples[i], cfg, layout);
      if (times) (*times)[i] = seconds_since(t0);
    });
    return out;
  };
  std::vector<double> feat_times(test.size(), 0.0), cls_times(test.size(), 0.0);
  auto train_feats = extract_all(train, nullptr);
  auto test_feats = extract_all(test, &feat_times);

  const int C = manifest.num_classes;
  std::vector<int> predictions(test.size(), 0);
  std::vector<int> ytrain;
  for (const auto& p : train) ytrain.push_back(p.label);

  features::PcaModel pca;
  features::SvmModel svm;
  bool have_svm = false;
  if (cfg.classifier == Classifier::svm) {
    std::vector<std::vector<double>> rows;
    for (auto& f : train_feats) {
      if (cfg.l2_normalize) features::l2_normalize(f.feature);
      rows.push_back(f.feature);
    }
    if (cfg.l2_normalize) {
      for (auto& f : test_feats) features::l2_normalize(f.feature);
    }
    auto xtrain = features::stack_rows(rows);
    rep.feature_dim = xtrain.cols;
    const std::size_t k = features::default_pca_dim(xtrain.rows, xtrain.cols,
                                                    static_cast<std::size_t>(cfg.pca_dim));
    pca = features::pca_fit(xtrain, k, cfg.pca_whiten);
    rep.pca_dim = k;
    const auto xproj = features::pca_transform(pca, xtrain);
    const auto cv = features::svm_cv_select(xproj, ytrain, rep.config.c_grid, cfg.cv_folds, cfg.seed);
    rep.selected_c = cv.best_c;
    rep.cv_mean_accuracy = cv.mean_accuracy;
    svm = features::svm_train(xproj, ytrain, cv.best_c, cfg.seed);
    have_svm = true;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto t0 = Clock::now();
      predictions[i] = features::svm_predict(svm, features::pca_transform(pca, test_feats[i].feature)).label;
      cls_times[i] = seconds_since(t0);
    }
  } else {
    rep.feature_dim = train_feats.empty() ? 0 : train_feats.front().feature.size();
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto t0 = Clock::now();
      predictions[i] = features::softmax_sum_fusion(test_feats[i].group_logits).label;
      cls_times[i] = seconds_since(t0);
    }
  }

  rep.confusion.assign(C, std::vector<int>(C, 0));
  rep.support.assign(C, 0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    rep.confusion[test[i].label][predictions[i]]++;
    rep.support[test[i].label]++;
    rep.correct += predictions[i] == test[i].label;
  }
  rep.total = static_cast<int>(test.size());
  rep.accuracy = rep.total ? static_cast<double>(rep.correct) / rep.total : 0.0;
  for (int c = 0; c < C; ++c) {
    rep.per_class_accuracy.push_back(rep.support[c] ? static_cast<double>(rep.confusion[c][c]) / rep.support[c] : 0.0);
  }
  rep.test_ids = split.test;
  rep.predictions = predictions;

  StageTimes sum;
  for (std::size_t i = 0; i < test.size(); ++i) {
    sum.projection += test[i].times.projection;
    sum.dynamic_image += test[i].times.dynamic_image;
    sum.proposal += test[i].times.proposal;
    sum.feature_extraction += feat_times[i];
    sum.classification += cls_times[i];
  }
  const double n = std::max<std::size_t>(1, test.size());
  rep.mean_times = {sum.projection / n, sum.dynamic_image / n, sum.proposal / n,
                    sum.feature_extraction / n, sum.classification / n};

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    const fs::path out(cfg.output_dir);
    std::ofstream(out / "report.txt", std::ios::trunc) << format_report(rep);
    std::ofstream(out / "timings.txt", std::ios::trunc) << report_timings(rep);
    cnn::save_model(model, (out / "model.bin").string());
    if (have_svm) {
      features::save_pca(pca, (out / "pca.bin").string());
      features::save_svm(svm, (out / "svm.bin").string());
    }
  }
  return rep;
}

std::string format_report(const RunReport& r) {
  std::string s = "# mvdi run report\n[result]\n";
  s += "accuracy = " + fmt("%.6f", r.accuracy) + "\n";
  s += "correct = " + std::to_string(r.correct) + "\n";
  s += "total = " + std::to_string(r.total) + "\n";
  s += "representation = " + to_string(r.config.representation) + "\n";
  s += "classifier = " + to_string(r.config.classifier) + "\n";
  s += "feature_dim = " + std::to_string(r.feature_dim) + "\n";
  s += "pca_dim = " + std::to_string(r.pca_dim) + "\n";
  s += "selected_c = " + format_double(r.selected_c) + "\n";
  s += "seed = " + std::to_string(r.config.seed) + "\n";
  s += "[cv]\n";
  for (std::size_t i = 0; i < r.cv_mean_accuracy.size(); ++i) {
    s += "c " + format_double(r.config.c_grid[i]) + " = " + fmt("%.6f", r.cv_mean_accuracy[i]) + "\n";
  }
  s += "[training]\n";
  for (std::size_t g = 0; g < r.final_losses.size(); ++g) {
    s += "group " + std::to_string(r.config.groups[g]) + " final_loss = " + fmt("%.6f", r.final_losses[g]) + "\n";
  }
  s += "[per_class]\n";
  for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c) {
    s += "class " + std::to_string(c) + " accuracy = " + fmt("%.6f", r.per_class_accuracy[c]) +
         " support = " + std::to_string(r.support[c]) + "\n";
  }
  s += "[confusion]\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) s += (j ? " " : "") + std::to_string(row[j]);
    s += "\n";
  }
  s += "[predictions]\n";
  for (std::size_t i = 0; i < r.test_ids.size(); ++i) {
    s += r.test_ids[i] + " = " + std::to_string(r.predictions[i]) + "\n";
  }
  s += "[config]\n" + r.config.to_map().to_text();
  return s;
}

std::string report_timings(const RunReport& r) {
  const auto& t = r.mean_times;
  std::string s = "# mean seconds per test video (I/O excluded)\n";
  s += "projection = " + fmt("%.9f", t.projection) + "\n";
  s += "dynamic_image = " + fmt("%.9f", t.dynamic_image) + "\n";
  s += "proposal = " + fmt("%.9f", t.proposal) + "\n";
  s += "feature_extraction = " + fmt("%.9f", t.feature_extraction) + "\n";
  s += "classification = " + fmt("%.9f", t.classification) + "\n";
  s += "overall = " + fmt("%.9f", t.overall()) + "\n";
  return s;
}

cnn::MultiStreamModel train_model(const PipelineConfig& cfg, const std::vector<std::string>& ids,
                                  int workers, std::vector<cnn::LossRecord>* trace) {
  cfg.validate();
  if (workers <= 0) workers = worker_count();
  const auto manifest = load_manifest(cfg.manifest);
  const auto layout = layout_for(cfg.groups);
  const auto prepared = prepare_all(manifest, ids, cfg, layout, workers);
  return train_prepared(prepared, cfg, layout, manifest.num_classes, trace);
}

// ---------------------------------------------------------------------------
// Ablations

AblationAxis parse_axis(const std::string& s) {
  if (s == "representation") return AblationAxis::representation;
  if (s == "view_groups") return AblationAxis::view_groups;
  if (s == "proposal") return AblationAxis::proposal;
  if (s == "classifier") return AblationAxis::classifier;
  throw ConfigError("unknown ablation axis '" + s + "'");
}

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::representation: return "representation";
    case AblationAxis::view_groups: return "view_groups";
    case AblationAxis::proposal: return "proposal";
    case AblationAxis::classifier: return "classifier";
  }
  return "?";
}

std::vector<AblationRow> run_ablation(const PipelineConfig& base, AblationAxis axis, int workers) {
  std::vector<std::pair<std::string, PipelineConfig>> settings;
  auto with = [&](std::string name, auto mutate) {
    PipelineConfig c = base;
    mutate(c);
    if (!base.output_dir.empty()) {
      std::string dir = name;
      std::replace(dir.begin(), dir.end(), ' ', '_');
      std::replace(dir.begin(), dir.end(), '+', '_');
      c.output_dir = (fs::path(base.output_dir) / dir).string();
    }
    settings.emplace_back(std::move(name), std::move(c));
  };
  switch (axis) {
    case AblationAxis::representation:
      with("DMM", [](PipelineConfig& c) { c.representation = Representation::dmm; });
      with("Dynamic image", [](PipelineConfig& c) { c.representation = Representation::dynamic_image; });
      break;
    case AblationAxis::view_groups:
      for (int g = 1; g <= 5; ++g) {
        with("Group " + std::to_string(g), [g](PipelineConfig& c) { c.groups = {g}; });
      }
      for (int g = 1; g <= 5; ++g) {
        std::string name = "Group 1";
        std::vector<int> ids = {1};
        for (int k = 2; k <= g; ++k) {
          name += "+" + std::to_string(k);
          ids.push_back(k);
        }
        with("Cumulative " + name, [ids](PipelineConfig& c) { c.groups = ids; });
      }
      break;
    case AblationAxis::proposal:
      with("MVDI-O", [](PipelineConfig& c) { c.proposal = false; });
      with("MVDI-AP", [](PipelineConfig& c) { c.proposal = true; });
      break;
    case AblationAxis::classifier:
      with("Softmax", [](PipelineConfig& c) { c.classifier = Classifier::softmax_sum; });
      with("SVM", [](PipelineConfig& c) { c.classifier = Classifier::svm; });
      break;
  }
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : settings) rows.push_back({name, run(cfg, workers).accuracy});
  return rows;
}

std::string format_ablation(AblationAxis axis, const std::vector<AblationRow>& rows) {
  std::size_t w = 7;
  for (const auto& r : rows) w = std::max(w, r.setting.size());
  std::string s = "# ablation: " + to_string(axis) + "\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-*s | %s\n", static_cast<int>(w), "setting", "accuracy");
  s += buf;
  s += std::string(w, '-') + "-+---------\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s | %.4f\n", static_cast<int>(w), r.setting.c_str(), r.accuracy);
    s += buf;
  }
  return s;
}

}  // namespace mvdi
