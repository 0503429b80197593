#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace mvdi {

/// One depth map. Values are unsigned 16-bit sensor units, 0 = no reading.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> depth;  // row-major

  DepthFrame() = default;
  DepthFrame(int w, int h);

  std::uint16_t at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int x, int y) { return depth[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return depth.size(); }

  bool operator==(const DepthFrame&) const = default;
};

struct DepthVideo {
  std::vector<DepthFrame> frames;

  int width() const { return frames.empty() ? 0 : frames.front().width; }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int length() const { return static_cast<int>(frames.size()); }

  /// Throws DataError on an empty video or inconsistent frame dimensions.
  void validate() const;

  bool operator==(const DepthVideo&) const = default;
};

DepthVideo reversed(const DepthVideo& video);

// Binary P5 portable graymap. 16-bit samples are big-endian as netpbm requires.
DepthFrame read_pgm16(const std::string& path);
void write_pgm16(const DepthFrame& frame, const std::string& path);
void write_pgm8(int width, int height, const std::vector<std::uint8_t>& pixels,
                const std::string& path);
std::vector<std::uint8_t> read_pgm8(const std::string& path, int& width, int& height);

/// Reads every `*.pgm` in `dir` in lexicographic order.
DepthVideo load_video(const std::string& dir);
/// Writes `frame_%06d.pgm` files, replacing any existing frame files in `dir`.
void save_video(const DepthVideo& video, const std::string& dir);

struct SampleRecord {
  std::string sample_id;
  std::string video_path;
  int label = 0;
  int subject_id = 0;
  int camera_view_id = 0;
  std::optional<std::string> boxes_path;
  std::optional<std::string> skeleton_path;
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  int num_classes = 0;

  void validate() const;
  const SampleRecord& find(const std::string& id) const;
};

// A leading "# num_classes = N" line fixes the class count; otherwise it is
// max(label) + 1. Relative paths are resolved against the manifest directory.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

enum class SplitMode { cross_subject, cross_view, explicit_ids };

struct SplitSpec {
  SplitMode mode = SplitMode::cross_subject;
  // Protocol modes: subjects or camera views used for training. Records whose
  // key is in `test_keys` (or, if empty, not in `train_keys`) go to test.
  std::set<int> train_keys;
  std::set<int> test_keys;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

Split make_split(const DatasetManifest& manifest, const SplitSpec& spec);

// Sidecars.
struct BBox {
  int frame_index = 0;
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  bool operator==(const BBox&) const = default;
};

struct Joint {
  double x = 0;
  double y = 0;
};

struct SkeletonFrame {
  int frame_index = 0;
  std::vector<Joint> joints;
};

std::vector<BBox> load_boxes(const std::string& path);
void save_boxes(const std::vector<BBox>& boxes, const std::string& path);
std::vector<SkeletonFrame> load_skeleton(const std::string& path);
void save_skeleton(const std::vector<SkeletonFrame>& frames, const std::string& path);

/// Desk-scale synthetic action corpus. Each class is a parametric motion of a
/// 3-D body+limb point set rendered orthographically from `camera_views`
/// (degrees about the vertical axis through the body).
struct SynthConfig {
  int num_classes = 4;
  int samples_per_class = 10;
  int width = 32;
  int height = 32;
  int frames = 16;
  std::vector<double> camera_views = {0.0};
  int num_subjects = 4;
  double noise = 2.0;  // depth units, Gaussian std on object pixels
};

/// Class names in index order; the first num_classes are used.
const std::vector<std::string>& synth_class_names();

/// Renders one action instance. The same `sample_seed` at different
/// `camera_deg` gives the same motion seen from another viewpoint.
DepthVideo synth_sample_video(const SynthConfig& config, int label, int subject_id,
                              double camera_deg, std::uint64_t dataset_seed,
                              std::uint64_t sample_seed, std::vector<BBox>* boxes = nullptr,
                              std::vector<SkeletonFrame>* skeleton = nullptr);

/// Writes videos/, boxes/, skeleton/ and manifest.csv under `out_dir`.
DatasetManifest synth_dataset(const SynthConfig& config, std::uint64_t seed,
                              const std::string& out_dir);

}  // namespace mvdi
