#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>

#include "mvdi/depthio.hpp"
#include "mvdi/error.hpp"

namespace fs = std::filesystem;

namespace mvdi {
namespace {

// World coordinates are in pixel units; one pixel unit of depth is this many
// sensor units (the inverse of the default projection depth_scale).
constexpr double kDepthUnitsPerPixel = 10.0;
// Depth of the scene pivot the virtual cameras orbit around.
constexpr double kSceneDepth = 9.0;

struct Vec3 {
  double x, y, z;
};

struct Body {
  double rx, ry, rz;  // torso ellipsoid radii
  double head_r;
  double limb_len;
  double limb_r;
};

Body subject_body(std::uint64_t dataset_seed, int subject_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(dataset_seed),
                    static_cast<std::uint32_t>(dataset_seed >> 32),
                    static_cast<std::uint32_t>(subject_id), 0x5b1du};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Body b{};
  b.rx = 2.6 + 0.8 * u(rng);
  b.ry = 4.2 + 1.0 * u(rng);
  b.rz = 1.8 + 0.6 * u(rng);
  b.head_r = 1.5 + 0.4 * u(rng);
  b.limb_len = 4.0 + 1.5 * u(rng);
  b.limb_r = 0.7 + 0.2 * u(rng);
  return b;
}

struct Motion {
  double jitter_x, jitter_y;
  double span_x, span_y;
  double depth_near, depth_far;
};

Motion sample_motion(std::uint64_t sample_seed) {
  std::mt19937_64 rng(sample_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Motion m{};
  m.jitter_x = -1.5 + 3.0 * u(rng);
  m.jitter_y = -1.5 + 3.0 * u(rng);
  m.span_x = 11.0 + 2.0 * u(rng);
  m.span_y = 8.0 + 2.0 * u(rng);
  m.depth_near = 6.5 + 1.0 * u(rng);
  m.depth_far = 10.5 + 1.0 * u(rng);
  return m;
}

// Body center and limb elevation (radians, +pi/2 = raised) at phase t in [0,1].
struct Pose {
  Vec3 center;
  double limb_angle;
};

Pose pose_at(int label, const Motion& m, double t) {
  Pose p{{m.jitter_x, m.jitter_y, kSceneDepth}, -std::numbers::pi / 2 + 0.3};
  const double s = t - 0.5;
  switch (label) {
    case 0: p.center.x += m.span_x * s; break;   // translate-right
    case 1: p.center.x -= m.span_x * s; break;   // translate-left
    case 2: p.center.y += m.span_y * s; break;   // translate-down
    case 3: p.center.y -= m.span_y * s; break;   // translate-up
    case 4: p.center.z = m.depth_far + (m.depth_near - m.depth_far) * t; break;  // approach
    case 5: p.center.z = m.depth_near + (m.depth_far - m.depth_near) * t; break; // recede
    case 6: p.limb_angle = -std::numbers::pi / 2 + std::numbers::pi * t; break;  // raise-arm
    case 7: p.limb_angle = std::numbers::pi / 2 - std::numbers::pi * t; break;   // lower-arm
    default: break;
  }
  return p;
}

// Surface samples of the articulated body in world coordinates; y grows down.
std::vector<Vec3> body_points(const Body& b, const Pose& pose, std::vector<Vec3>* joints) {
  std::vector<Vec3> pts;
  const auto& c = pose.center;
  constexpr double pi = std::numbers::pi;
  constexpr int kU = 120, kV = 60;
  for (int i = 0; i < kU; ++i) {
    const double phi = 2 * pi * i / kU;
    for (int j = 0; j <= kV; ++j) {
      const double th = pi * j / kV;
      pts.push_back({c.x + b.rx * std::sin(th) * std::cos(phi), c.y + b.ry * std::cos(th),
                     c.z + b.rz * std::sin(th) * std::sin(phi)});
    }
  }
  const Vec3 head{c.x, c.y - b.ry - b.head_r * 0.9, c.z};
  for (int i = 0; i < 48; ++i) {
    const double phi = 2 * pi * i / 48;
    for (int j = 0; j <= 24; ++j) {
      const double th = pi * j / 24;
      pts.push_back({head.x + b.head_r * std::sin(th) * std::cos(phi),
                     head.y + b.head_r * std::cos(th),
                     head.z + b.head_r * std::sin(th) * std::sin(phi)});
    }
  }
  const Vec3 shoulder{c.x + b.rx * 0.85, c.y - b.ry * 0.55, c.z};
  const Vec3 dir{std::cos(pose.limb_angle), -std::sin(pose.limb_angle), 0.0};
  const Vec3 hand{shoulder.x + dir.x * b.limb_len, shoulder.y + dir.y * b.limb_len, shoulder.z};
  // Orthonormal frame around the limb axis: (-dir.y, dir.x, 0) and z.
  for (int k = 0; k <= 40; ++k) {
    const double a = b.limb_len * k / 40;
    for (int i = 0; i < 20; ++i) {
      const double phi = 2 * pi * i / 20;
      const double r1 = b.limb_r * std::cos(phi), r2 = b.limb_r * std::sin(phi);
      pts.push_back({shoulder.x + dir.x * a - dir.y * r1, shoulder.y + dir.y * a + dir.x * r1,
                     shoulder.z + r2});
    }
  }
  if (joints) {
    *joints = {head, {c.x, c.y - b.ry, c.z}, c, {c.x, c.y + b.ry, c.z}, shoulder, hand};
  }
  return pts;
}

Vec3 orbit(const Vec3& p, double cos_g, double sin_g) {
  const double dz = p.z - kSceneDepth;
  return {p.x * cos_g + dz * sin_g, p.y, -p.x * sin_g + dz * cos_g + kSceneDepth};
}

}  // namespace

const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names = {
      "translate-right", "translate-left", "translate-down", "translate-up",
      "approach",        "recede",         "raise-arm",      "lower-arm"};
  return names;
}

DepthVideo synth_sample_video(const SynthConfig& config, int label, int subject_id,
                              double camera_deg, std::uint64_t dataset_seed,
                              std::uint64_t sample_seed, std::vector<BBox>* boxes,
                              std::vector<SkeletonFrame>* skeleton) {
  if (label < 0 || label >= static_cast<int>(synth_class_names().size())) {
    throw ConfigError("synth: label out of range");
  }
  const Body body = subject_body(dataset_seed, subject_id);
  const Motion motion = sample_motion(sample_seed);
  std::mt19937_64 noise_rng(sample_seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double g = camera_deg * std::numbers::pi / 180.0;
  const double cg = std::cos(g), sg = std::sin(g);
  const double cx = (config.width - 1) / 2.0, cy = (config.height - 1) / 2.0;

  DepthVideo video;
  if (boxes) boxes->clear();
  if (skeleton) skeleton->clear();
  for (int f = 0; f < config.frames; ++f) {
    const double t = config.frames > 1 ? static_cast<double>(f) / (config.frames - 1) : 0.0;
    std::vector<Vec3> joints;
    const auto pts = body_points(body, pose_at(label, motion, t), &joints);

    std::vector<double> zbuf(static_cast<std::size_t>(config.width) * config.height,
                             std::numeric_limits<double>::infinity());
    for (const auto& p : pts) {
      const Vec3 q = orbit(p, cg, sg);
      const long px = std::lround(q.x + cx), py = std::lround(q.y + cy);
      if (px < 0 || py < 0 || px >= config.width || py >= config.height) continue;
      auto& z = zbuf[static_cast<std::size_t>(py) * config.width + px];
      z = std::min(z, q.z);
    }
    DepthFrame frame(config.width, config.height);
    int x0 = config.width, y0 = config.height, x1 = -1, y1 = -1;
    for (int y = 0; y < config.height; ++y) {
      for (int x = 0; x < config.width; ++x) {
        const double z = zbuf[static_cast<std::size_t>(y) * config.width + x];
        if (!std::isfinite(z)) continue;
        const double d = z * kDepthUnitsPerPixel + config.noise * noise(noise_rng);
        frame.at(x, y) = static_cast<std::uint16_t>(std::clamp(std::lround(d), 1L, 65535L));
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
    if (boxes && x1 >= 0) boxes->push_back({f, x0, y0, x1 - x0 + 1, y1 - y0 + 1});
    if (skeleton) {
      SkeletonFrame sf{f, {}};
      for (const auto& j : joints) {
        const Vec3 q = orbit(j, cg, sg);
        sf.joints.push_back({q.x + cx, q.y + cy});
      }
      skeleton->push_back(std::move(sf));
    }
    video.frames.push_back(std::move(frame));
  }
  return video;
}

DatasetManifest synth_dataset(const SynthConfig& config, std::uint64_t seed,
                              const std::string& out_dir) {
  if (config.num_classes < 2 || config.num_classes > 8) {
    throw ConfigError("synth: num_classes must be in [2, 8]");
  }
  if (config.samples_per_class < 1) throw ConfigError("synth: samples_per_class must be >= 1");
  if (config.width < 8 || config.height < 8) throw ConfigError("synth: frame size must be >= 8");
  if (config.frames < 2) throw ConfigError("synth: frames must be >= 2");
  if (config.camera_views.empty()) throw ConfigError("synth: need at least one camera view");
  for (double a : config.camera_views) {
    if (!(a >= -180.0 && a <= 180.0)) throw ConfigError("synth: camera view out of [-180, 180]");
  }
  if (config.num_subjects < 1) throw ConfigError("synth: num_subjects must be >= 1");
  if (!(config.noise >= 0.0)) throw ConfigError("synth: noise must be >= 0");

  const fs::path root(out_dir);
  fs::create_directories(root / "videos");
  fs::create_directories(root / "boxes");
  fs::create_directories(root / "skeleton");

  DatasetManifest manifest;
  manifest.num_classes = config.num_classes;
  const int nviews = static_cast<int>(config.camera_views.size());
  for (int c = 0; c < config.num_classes; ++c) {
    for (int i = 0; i < config.samples_per_class; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "c%d_s%03d", c, i);
      const int subject = i % config.num_subjects;
      const int view = (i / config.num_subjects) % nviews;
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(i)};
      std::uint64_t sample_seed = 0;
      {
        std::mt19937_64 g(seq);
        sample_seed = g();
      }
      std::vector<BBox> boxes;
      std::vector<SkeletonFrame> skel;
      const auto video = synth_sample_video(config, c, subject, config.camera_views[view], seed,
                                            sample_seed, &boxes, &skel);
      SampleRecord r;
      r.sample_id = id;
      r.video_path = (root / "videos" / id).string();
      r.label = c;
      r.subject_id = subject;
      r.camera_view_id = view;
      r.boxes_path = (root / "boxes" / (std::string(id) + ".csv")).string();
      r.skeleton_path = (root / "skeleton" / (std::string(id) + ".csv")).string();
      save_video(video, r.video_path);
      save_boxes(boxes, *r.boxes_path);
      save_skeleton(skel, *r.skeleton_path);
      manifest.records.push_back(std::move(r));
    }
  }
  save_manifest(manifest, (root / "manifest.csv").string());
  return manifest;
}

}  // namespace mvdi
