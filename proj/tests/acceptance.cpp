// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mvdi/error.hpp"
#include "mvdi/features.hpp"
#include "mvdi/minicnn.hpp"
#include "mvdi/pipeline.hpp"
#include "mvdi/proposal.hpp"
#include "mvdi/rankpool.hpp"
#include "mvdi/viewsynth.hpp"
#include "oracle_cnn.hpp"
#include "oracles.hpp"

using namespace mvdi;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// Every pixel is non-decreasing in time and at least one rises each frame.
DepthVideo monotone_video(std::mt19937_64& rng, int w, int h, int T) {
  std::uniform_int_distribution<int> start(100, 2000), step(0, 40);
  DepthVideo v;
  DepthFrame f(w, h);
  for (auto& d : f.depth) d = static_cast<std::uint16_t>(start(rng));
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      for (auto& d : f.depth) d = static_cast<std::uint16_t>(d + step(rng));
      f.depth[rng() % f.depth.size()] += 1;
    }
    v.frames.push_back(f);
  }
  return v;
}

Outcome c1_order_fidelity() {
  std::mt19937_64 rng(101);
  const auto t0 = Clock::now();
  double worst = 1.0;
  PoolConfig cfg;
  cfg.variant = PoolVariant::exact_ranksvm;
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<int> side(1, 8), len(3, 20);
    const int w = side(rng), h = side(rng), T = len(rng);
    const auto v = monotone_video(rng, w, h, T);
    const auto means = prefix_means(v);
    const auto u = exact_rank_pool(means, cfg);
    worst = std::min(worst, oracle::pair_order_fraction(oracle::prefix_means(v), u.u));
  }
  const double secs = seconds_since(t0);
  return {worst >= 0.95 && secs < 10.0,
          fmt("worst per-video ordered-pair fraction %.4f (>= 0.95), %.2f s (< 10 s)", worst, secs)};
}

Outcome c2_exact_vs_grid() {
  std::mt19937_64 rng(202);
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const int T = 3 + static_cast<int>(rng() % 3);
    std::uniform_int_distribution<int> val(1, 20);
    DepthVideo v;
    for (int t = 0; t < T; ++t) {
      DepthFrame f(1, 1);
      f.depth[0] = static_cast<std::uint16_t>(val(rng));
      v.frames.push_back(f);
    }
    PoolConfig cfg;
    cfg.variant = PoolVariant::exact_ranksvm;
    cfg.step_size = 0.1;
    cfg.max_iters = 50000;
    const auto u = exact_rank_pool(prefix_means(v), cfg);
    const auto V = oracle::prefix_means(v);
    double best = 0, best_f = 1e300;
    for (double x = -5; x <= 5; x += 1e-5) {
      const double f = oracle::rank_objective(V, {x}, cfg.lambda);
      if (f < best_f) {
        best_f = f;
        best = x;
      }
    }
    worst = std::max(worst, std::abs(u.u[0] - best));
  }
  return {worst < 1e-3, fmt("max |u - u_grid| = %.2e over 10 instances (< 1e-3)", worst)};
}

Outcome c3_approx_properties() {
  std::mt19937_64 rng(303);
  PoolConfig frames;
  frames.variant = PoolVariant::approx_frames;
  PoolConfig prefix;
  prefix.variant = PoolVariant::approx_prefix;
  int antisym_fail = 0;
  double scale_err = 0;
  for (int i = 0; i < 100; ++i) {
    std::uniform_int_distribution<int> side(1, 12), len(2, 20);
    const auto v = oracle::random_video(rng, side(rng), side(rng), len(rng), 20000, 0.1);
    const auto u = approx_rank_pool(v, frames);
    const auto ur = approx_rank_pool(reversed(v), frames);
    for (std::size_t k = 0; k < u.u.size(); ++k) antisym_fail += ur.u[k] != -u.u[k];

    DepthVideo s = v;
    for (auto& f : s.frames)
      for (auto& d : f.depth) d = static_cast<std::uint16_t>(3 * d);
    for (const auto* cfg : {&frames, &prefix}) {
      const auto a = approx_rank_pool(v, *cfg), b = approx_rank_pool(s, *cfg);
      for (std::size_t k = 0; k < a.u.size(); ++k) {
        const double ref = 3 * a.u[k];
        const double err = std::abs(b.u[k] - ref) / std::max(std::abs(ref), 1e-300);
        if (ref != 0 || b.u[k] != 0) scale_err = std::max(scale_err, err);
      }
    }
  }
  return {antisym_fail == 0 && scale_err < 1e-9,
          fmt("antisymmetry mismatches %d (== 0), max scale relative error %.2e (< 1e-9)", antisym_fail,
              scale_err)};
}

Outcome c4_geometry() {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> ang(-180, 180);
  double orth = 0, det_err = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto r = rotation_matrix({ang(rng), ang(rng)});
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double dot = 0;
        for (int k = 0; k < 3; ++k) dot += r[a * 3 + k] * r[b * 3 + k];
        orth = std::max(orth, std::abs(dot - (a == b)));
      }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    det_err = std::max(det_err, std::abs(det - 1));
  }
  int identity_fail = 0, oracle_fail = 0, frames = 0;
  for (int i = 0; i < 200; ++i) {
    std::uniform_int_distribution<int> side(1, 32);
    const auto v = oracle::random_video(rng, side(rng), side(rng), 1, 3000, 0.3);
    ProjectionConfig pc;
    pc.depth_scale = 0.01 * (1 + rng() % 20);
    pc.hole_fill_radius = static_cast<int>(rng() % 3);
    ProjectionConfig no_fill = pc;
    no_fill.hole_fill_radius = 0;
    identity_fail += !(reproject_frame(v.frames[0], {0, 0}, no_fill) == v.frames[0]);
    const ViewSpec view{ang(rng), ang(rng) / 2};
    oracle_fail += !(reproject_frame(v.frames[0], view, pc) ==
                     oracle::reproject(v.frames[0], view.alpha, view.beta, pc.depth_scale, pc.hole_fill_radius));
    ++frames;
  }
  return {orth < 1e-12 && det_err < 1e-12 && identity_fail == 0 && oracle_fail == 0,
          fmt("1000 rotations: orthonormality %.1e, |det-1| %.1e; identity mismatches %d; oracle mismatches "
              "%d of %d frames",
              orth, det_err, identity_fail, oracle_fail, frames)};
}

Outcome c5_dmm() {
  std::mt19937_64 rng(505);
  int oracle_fail = 0, reverse_fail = 0, negate_fail = 0;
  PoolConfig frames;
  frames.variant = PoolVariant::approx_frames;
  for (int i = 0; i < 100; ++i) {
    std::uniform_int_distribution<int> side(1, 10), len(2, 12);
    const auto v = oracle::random_video(rng, side(rng), side(rng), len(rng), 200, 0.2);
    const double eps = static_cast<double>(rng() % 100);
    const auto d = compute_dmm(v, eps);
    oracle_fail += d.pixels != oracle::normalize8(oracle::dmm_counts(v, eps));
    reverse_fail += !(compute_dmm(reversed(v), eps) == d);
    const auto u = approx_rank_pool(v, frames), ur = approx_rank_pool(reversed(v), frames);
    for (std::size_t k = 0; k < u.u.size(); ++k) negate_fail += ur.u[k] != -u.u[k];
  }
  return {oracle_fail == 0 && reverse_fail == 0 && negate_fail == 0,
          fmt("oracle mismatches %d, DMM(reverse) != DMM %d, dynamic image not negated %d (all == 0)",
              oracle_fail, reverse_fail, negate_fail)};
}

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
    c.pool = out >= 4 && (i == 0 || pick(0, 1) == 1);
    size = c.pool ? out / 2 : out;
    arch.conv.push_back(c);
  }
  arch.hidden = {pick(3, 6)};
  if (pick(0, 1)) arch.hidden.push_back(pick(3, 5));
  const int groups = pick(1, 3), classes = pick(2, 4);
  Probe p{cnn::init_model(arch, groups, classes, rng()), {}, pick(0, groups - 1)};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& l : p.model.shared.layers)
    for (auto& b : l.bias) b = 0.2 * u(rng) - 0.05;
  for (auto& s : p.model.streams)
    for (auto& l : s.layers)
      for (auto& b : l.bias) b = 0.2 * u(rng) - 0.05;
  const int n = pick(2, 4);
  for (int i = 0; i < n; ++i) {
    std::vector<double> img(static_cast<std::size_t>(arch.input_size) * arch.input_size);
    for (auto& v : img) v = u(rng);
    p.batch.images.push_back(std::move(img));
    p.batch.labels.push_back(pick(0, classes - 1));
  }
  return p;
}

// Central differences of the test-side naive loss, skipping entries whose
// +-h step changes the activation pattern.
double oracle_grad_error(Probe& p, double wd, double h, int& compared, int& kinks) {
  cnn::TrainConfig cfg;
  cfg.dropout = 0;
  cfg.weight_decay = wd;
  const auto lg = cnn::loss_and_grads(p.model, p.group, p.batch, cfg);
  std::vector<int> base;
  oracle::naive_loss(p.model, p.group, p.batch, wd, &base);
  double worst = 0;
  auto probe = [&](const std::vector<std::vector<double>*>& params, const std::vector<std::vector<double>>& g) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      auto& v = *params[b];
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double orig = v[k];
        std::vector<int> pp, pm;
        v[k] = orig + h;
        const double fp = oracle::naive_loss(p.model, p.group, p.batch, wd, &pp);
        v[k] = orig - h;
        const double fm = oracle::naive_loss(p.model, p.group, p.batch, wd, &pm);
        v[k] = orig;
        if (pp != base || pm != base) {
          ++kinks;
          continue;
        }
        const double num = (fp - fm) / (2 * h), ana = g[b][k];
        worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6}));
        ++compared;
      }
    }
  };
  probe(p.model.shared_blocks(), lg.grads.shared);
  probe(p.model.stream_blocks(p.group), lg.grads.stream);
  return worst;
}

Outcome c6_gradient_check() {
  const auto t0 = Clock::now();
  double worst_lib = 0, worst_oracle = 0;
  int compared = 0, kinks = 0, pooled = 0, deep = 0;
  for (int i = 0; i < 20; ++i) {
    auto p = random_probe(6000 + i);
    for (const auto& b : cnn::gradient_check(p.model, p.group, p.batch, 1e-3))
      worst_lib = std::max(worst_lib, b.max_rel_error);
    worst_oracle = std::max(worst_oracle, oracle_grad_error(p, 1e-3, 1e-5, compared, kinks));
    for (const auto& l : p.model.arch.conv) pooled += l.pool;
    deep += p.model.arch.hidden.size() > 1;
  }
  const double secs = seconds_since(t0);
  return {worst_lib < 1e-4 && worst_oracle < 1e-4 && pooled > 0 && deep > 0 && secs < 60,
          fmt("20 models (%d pooled conv layers, %d with 2 hidden layers): library check %.2e, test "
              "oracle %.2e over %d entries (%d at kinks) (< 1e-4), %.2f s (< 60 s)",
              pooled, deep, worst_lib, worst_oracle, compared, kinks, secs)};
}

Outcome c7_shared_conv() {
  cnn::Arch a;
  a.input_size = 12;
  a.conv = cnn::parse_conv_specs("4x3s1p1P,6x3s1p1");
  a.hidden = {16};
  auto model = cnn::init_model(a, 5, 3, 77);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<cnn::GroupDataset> data(5);
  for (auto& d : data)
    for (int i = 0; i < 6; ++i) {
      cnn::TrainItem item;
      item.label = i % 3;
      for (int c = 0; c < 2; ++c) {
        std::vector<double> x(144);
        for (auto& v : x) v = u(rng);
        item.candidates.push_back(x);
      }
      d.push_back(item);
    }
  cnn::TrainConfig cfg;
  cfg.iters = 10;
  cfg.learning_rate = 0.01;
  int steps = 0, mismatches = 0, unchanged = 0, order_errors = 0;
  std::vector<std::vector<double>> previous;
  cnn::train_round_robin(model, data, cfg, [&](const cnn::MultiStreamModel& m, int, int group) {
    order_errors += group != steps % 5;
    ++steps;
    const auto ref = m.stream(0).conv;
    std::vector<std::vector<double>> now;
    for (const auto& l : ref.layers) {
      now.push_back(l.weight);
      now.push_back(l.bias);
    }
    for (int g = 1; g < m.num_groups(); ++g) {
      const auto view = m.stream(g).conv;
      for (std::size_t i = 0; i < view.layers.size(); ++i) {
        mismatches += view.layers[i].weight != ref.layers[i].weight;
        mismatches += view.layers[i].bias != ref.layers[i].bias;
      }
    }
    unchanged += now == previous;
    previous = now;
  });
  return {steps == 50 && mismatches == 0 && unchanged == 0 && order_errors == 0,
          fmt("%d steps over 5 streams: conv mismatches across streams %d, steps that left conv unchanged "
              "%d, schedule errors %d",
              steps, mismatches, unchanged, order_errors)};
}

struct Benchmark {
  std::string dir;
  PipelineConfig config;
};

Benchmark make_benchmark() {
  const auto dir = oracle::temp_dir("acceptance_bench");
  SynthConfig s;
  s.num_classes = 4;
  s.samples_per_class = 20;
  s.width = 32;
  s.height = 32;
  s.frames = 16;
  s.num_subjects = 4;
  s.camera_views = {-30, 0, 30};
  synth_dataset(s, 3, dir.string());
  PipelineConfig c;
  c.manifest = (dir / "manifest.csv").string();
  c.split.mode = SplitMode::cross_subject;
  c.split.train_keys = {0, 1};
  c.groups = {1, 2, 3, 4, 5};
  c.proposal = true;
  c.classifier = Classifier::svm;
  c.train.iters = 150;
  c.train.learning_rate = 0.01;
  c.seed = 7;
  return {dir.string(), c};
}

std::vector<int> per_class_counts(const std::vector<std::string>& ids, const std::string& manifest) {
  const auto m = load_manifest(manifest);
  std::vector<int> n(m.num_classes, 0);
  for (const auto& id : ids) n[m.find(id).label] += 1;
  return n;
}

Outcome c8_end_to_end(const Benchmark& b, RunReport& full) {
  const auto t0 = Clock::now();
  full = run(b.config, 1);
  const double run_secs = seconds_since(t0);
  auto g3 = b.config;
  g3.groups = {3};
  const double acc3 = run(g3, 1).accuracy;

  const auto train = make_split(load_manifest(b.config.manifest), b.config.split).train;
  const auto tr = per_class_counts(train, b.config.manifest);
  const auto te = per_class_counts(full.test_ids, b.config.manifest);
  bool shape = tr.size() == 4;
  for (int k = 0; k < 4 && shape; ++k) shape = tr[k] == 10 && te[k] == 10;

  const auto rows = run_ablation(b.config, AblationAxis::view_groups, 1);
  std::printf("%s", format_ablation(AblationAxis::view_groups, rows).c_str());
  const double secs = seconds_since(t0);
  return {shape && full.accuracy >= 0.90 && full.accuracy >= acc3 && secs < 900,
          fmt("4 classes x (10 train + 10 test): accuracy %.3f (>= 0.90), Group 3 alone %.3f (<= all "
              "groups), run %.1f s, with table %.1f s (< 900 s)",
              full.accuracy, acc3, run_secs, secs)};
}

Outcome c9_di_vs_dmm(const Benchmark& b, const RunReport& di) {
  auto c = b.config;
  c.representation = Representation::dmm;
  const double dmm = run(c, 1).accuracy;
  const double gap = 100 * (di.accuracy - dmm);
  return {gap >= 10, fmt("dynamic image %.3f vs DMM %.3f: gap %.1f points (>= 10)", di.accuracy, dmm, gap)};
}

Outcome c10_proposal() {
  std::mt19937_64 rng(1010);
  int cover_fail = 0, minimal_fail = 0, order_fail = 0, extend_fail = 0, crop_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    const int W = 8 + static_cast<int>(rng() % 40), H = 8 + static_cast<int>(rng() % 40);
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<BBox> boxes;
    for (int k = 0; k < n; ++k) {
      BBox b;
      b.x = static_cast<int>(rng() % (W - 1));
      b.y = static_cast<int>(rng() % (H - 1));
      b.w = 1 + static_cast<int>(rng() % (W - b.x));
      b.h = 1 + static_cast<int>(rng() % (H - b.y));
      b.frame_index = static_cast<int>(rng() % 10);
      boxes.push_back(b);
    }
    const auto c = merge_boxes(boxes);
    bool tx0 = false, ty0 = false, tx1 = false, ty1 = false, tt0 = false, tt1 = false;
    for (const auto& b : boxes) {
      cover_fail += !c.contains(b);
      tx0 |= b.x == c.x0;
      ty0 |= b.y == c.y0;
      tx1 |= b.x + b.w == c.x1;
      ty1 |= b.y + b.h == c.y1;
      tt0 |= b.frame_index == c.t0;
      tt1 |= b.frame_index == c.t1;
    }
    minimal_fail += !(tx0 && ty0 && tx1 && ty1 && tt0 && tt1);
    auto shuffled = boxes;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    order_fail += !(merge_boxes(shuffled) == c);

    const int m = static_cast<int>(rng() % 6);
    const auto e = extend_cube(c, m, W, H);
    extend_fail += e.x0 != std::max(0, c.x0 - m) || e.y0 != std::max(0, c.y0 - m) ||
                   e.x1 != std::min(W, c.x1 + m) || e.y1 != std::min(H, c.y1 + m) || e.t0 != c.t0 ||
                   e.t1 != c.t1;

    const auto v = oracle::random_video(rng, W, H, 10, 1000, 0.1);
    const auto cropped = crop_video(v, e);
    bool ok = cropped.length() == e.t1 - e.t0 + 1;
    for (int t = 0; ok && t < cropped.length(); ++t) {
      ok = cropped.frames[t].width == e.width() && cropped.frames[t].height == e.height();
      for (int y = 0; ok && y < e.height(); ++y)
        for (int x = 0; ok && x < e.width(); ++x)
          ok = cropped.frames[t].at(x, y) == v.frames[e.t0 + t].at(e.x0 + x, e.y0 + y);
    }
    crop_fail += !ok;
  }
  const auto ex = extend_cube({40, 50, 80, 100, 2, 9}, 30, 320, 240);
  const bool example = ex == ProposalCube{10, 20, 110, 130, 2, 9} && scaled_margin(320) == 30;
  return {cover_fail + minimal_fail + order_fail + extend_fail + crop_fail == 0 && example,
          fmt("1000 box sets: coverage %d, minimality %d, order %d, extend %d, crop %d failures; 30 px "
              "example %s",
              cover_fail, minimal_fail, order_fail, extend_fail, crop_fail, example ? "exact" : "WRONG")};
}

Outcome c11_classifier_stack() {
  using namespace features;
  std::mt19937_64 rng(1111);
  std::normal_distribution<double> g(0, 1);

  double orth = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix x(40, 12);
    for (auto& v : x.data) v = g(rng);
    const auto p = pca_fit(x, 8);
    for (std::size_t a = 0; a < 8; ++a)
      for (std::size_t b = 0; b < 8; ++b) {
        double dot = 0;
        for (std::size_t j = 0; j < 12; ++j) dot += p.components(a, j) * p.components(b, j);
        orth = std::max(orth, std::abs(dot - (a == b)));
      }
  }

  Matrix basis(2, 5), plane(30, 5);
  for (auto& v : basis.data) v = g(rng);
  for (std::size_t i = 0; i < 30; ++i) {
    const double s = g(rng), t = g(rng);
    for (std::size_t j = 0; j < 5; ++j) plane(i, j) = 1 + s * basis(0, j) + t * basis(1, j);
  }
  const auto pp = pca_fit(plane, 2);
  double recon = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    const auto z = pca_transform(pp, plane.row(i));
    for (std::size_t j = 0; j < 5; ++j) {
      const double r = pp.mean[j] + z[0] * pp.components(0, j) + z[1] * pp.components(1, j);
      recon += (r - plane(i, j)) * (r - plane(i, j));
    }
  }

  Matrix sep(60, 2);
  std::vector<int> y;
  for (std::size_t i = 0; i < 60; ++i) {
    const int label = static_cast<int>(i % 2);
    sep(i, 0) = g(rng) + (label ? 8 : -8);
    sep(i, 1) = g(rng);
    y.push_back(label);
  }
  const auto svm = svm_train(sep, y, 1.0, 1);
  int correct = 0;
  for (std::size_t i = 0; i < 60; ++i) correct += svm_predict(svm, sep.row(i)).label == y[i];
  const auto cv = svm_cv_select(sep, y, {0.01, 0.1, 1, 10}, 5, 3);
  const auto cv2 = svm_cv_select(sep, y, {10, 1, 0.1, 0.01}, 5, 3);
  const bool tie = cv.best_c == 0.01 && cv2.best_c == 0.01 && cv.fold_scores == svm_cv_select(sep, y, {0.01, 0.1, 1, 10}, 5, 3).fold_scores;

  double fusion_err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::map<int, std::vector<double>> logits;
    const int groups = 1 + trial % 5;
    for (int k = 0; k < groups; ++k)
      for (int c = 0; c < 6; ++c) logits[k].push_back(3 * g(rng));
    double sum = 0;
    for (double s : softmax_sum_fusion(logits).scores) sum += s;
    fusion_err = std::max(fusion_err, std::abs(sum - groups));
  }
  const bool ok = orth < 1e-8 && recon < 1e-9 && correct == 60 && tie && fusion_err < 1e-12;
  return {ok, fmt("PCA orthonormality %.1e (< 1e-8), plane reconstruction %.1e (< 1e-9), separable SVM "
                  "%d/60, CV tie-break %s, fusion sum error %.1e",
                  orth, recon, correct, tie ? "0.01" : "WRONG", fusion_err)};
}

Outcome c12_reproducible(const Benchmark& b, const RunReport& first) {
  const auto ref = format_report(first);
  const auto again = format_report(run(b.config, 1));
  const auto two = format_report(run(b.config, 2));
  const auto four = format_report(run(b.config, 4));
  const bool same = ref == again && ref == two && ref == four;
  return {same, fmt("report %zu bytes; repeat %s, 2 workers %s, 4 workers %s", ref.size(),
                    ref == again ? "identical" : "DIFFERS", ref == two ? "identical" : "DIFFERS",
                    ref == four ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s C%d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "rank-pool order fidelity", c1_order_fidelity);
  report(2, "exact pooling vs grid search", c2_exact_vs_grid);
  report(3, "approximate pooling properties", c3_approx_properties);
  report(4, "rotation and reprojection geometry", c4_geometry);
  report(5, "DMM correctness and order blindness", c5_dmm);
  report(6, "gradient check", c6_gradient_check);
  report(7, "shared conv block across streams", c7_shared_conv);

  Benchmark bench;
  RunReport full;
  bool have_full = false;
  report(8, "end-to-end scaled experiment", [&] {
    bench = make_benchmark();
    auto o = c8_end_to_end(bench, full);
    have_full = true;
    return o;
  });
  report(9, "dynamic image beats DMM", [&] {
    if (!have_full) return Outcome{false, "no end-to-end run"};
    return c9_di_vs_dmm(bench, full);
  });
  report(10, "proposal machinery", c10_proposal);
  report(11, "classifier stack", c11_classifier_stack);
  report(12, "reproducibility", [&] {
    if (!have_full) return Outcome{false, "no end-to-end run"};
    return c12_reproducible(bench, full);
  });

  std::printf("%d of 12 criteria passed\n", 12 - failed);
  return failed == 0 ? 0 : 1;
}
