#include "mvdi/depthio.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "mvdi/error.hpp"

namespace fs = std::filesystem;

namespace mvdi {

DepthFrame::DepthFrame(int w, int h)
    : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0) {
  if (w < 1 || h < 1) throw DataError("frame dimensions must be >= 1");
}

void DepthVideo::validate() const {
  if (frames.empty()) throw DataError("empty video");
  const int w = frames.front().width;
  const int h = frames.front().height;
  if (w < 1 || h < 1) throw DataError("frame dimensions must be >= 1");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.width != w || f.height != h) {
      throw DataError("frame " + std::to_string(i) + " is " + std::to_string(f.width) + "x" +
                      std::to_string(f.height) + ", expected " + std::to_string(w) + "x" +
                      std::to_string(h));
    }
    if (f.depth.size() != static_cast<std::size_t>(w) * h) {
      throw DataError("frame " + std::to_string(i) + " has wrong sample count");
    }
  }
}

DepthVideo reversed(const DepthVideo& video) {
  DepthVideo out;
  out.frames.assign(video.frames.rbegin(), video.frames.rend());
  return out;
}

// ---------------------------------------------------------------------------
// PGM

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& is, const std::string& path) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  if (tok.empty()) throw DataError("malformed graymap header: " + path);
  return tok;
}

int pgm_int(std::istream& is, const std::string& path) {
  const auto tok = pgm_token(is, path);
  int v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size() || v < 1) {
    throw DataError("malformed graymap header: " + path);
  }
  return v;
}

struct PgmHeader {
  int width, height, maxval;
};

PgmHeader read_header(std::istream& is, const std::string& path) {
  if (pgm_token(is, path) != "P5") throw DataError("not a binary P5 graymap: " + path);
  PgmHeader h{};
  h.width = pgm_int(is, path);
  h.height = pgm_int(is, path);
  h.maxval = pgm_int(is, path);
  if (h.maxval > 65535) throw DataError("malformed graymap header (maxval): " + path);
  return h;
}

}  // namespace

DepthFrame read_pgm16(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  const auto h = read_header(is, path);
  DepthFrame f(h.width, h.height);
  const std::size_t bpp = h.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(f.size() * bpp);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(is.gcount()) != raw.size()) {
    throw DataError("truncated graymap data: " + path);
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.depth[i] = bpp == 2 ? static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1])
                          : raw[i];
  }
  return f;
}

void write_pgm16(const DepthFrame& frame, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P5\n" << frame.width << ' ' << frame.height << "\n65535\n";
  std::vector<unsigned char> raw(frame.size() * 2);
  for (std::size_t i = 0; i < frame.size(); ++i) {
    raw[2 * i] = static_cast<unsigned char>(frame.depth[i] >> 8);
    raw[2 * i + 1] = static_cast<unsigned char>(frame.depth[i] & 0xFF);
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw DataError("write failed: " + path);
}

void write_pgm8(int width, int height, const std::vector<std::uint8_t>& pixels,
                const std::string& path) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw DataError("pixel count does not match dimensions");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "P5\n" << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!os) throw DataError("write failed: " + path);
}

std::vector<std::uint8_t> read_pgm8(const std::string& path, int& width, int& height) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  const auto h = read_header(is, path);
  if (h.maxval > 255) throw DataError("expected an 8-bit graymap: " + path);
  width = h.width;
  height = h.height;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * height);
  is.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(is.gcount()) != px.size()) {
    throw DataError("truncated graymap data: " + path);
  }
  return px;
}

DepthVideo load_video(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("video directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("empty video (no .pgm frames): " + dir);
  DepthVideo v;
  v.frames.reserve(files.size());
  for (const auto& f : files) v.frames.push_back(read_pgm16(f));
  v.validate();
  return v;
}

void save_video(const DepthVideo& video, const std::string& dir) {
  video.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.starts_with("frame_") && e.path().extension() == ".pgm") {
      fs::remove(e.path());
    }
  }
  char name[32];
  for (std::size_t i = 0; i < video.frames.size(); ++i) {
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", i);
    write_pgm16(video.frames[i], (fs::path(dir) / name).string());
  }
}

// ---------------------------------------------------------------------------
// CSV helpers

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse_num(const std::string& s, const std::string& what) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw DataError("cannot parse " + what + ": '" + s + "'");
  }
  return v;
}

std::string resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path q(p);
  return q.is_absolute() ? q.string() : (base / q).lexically_normal().string();
}

std::string relative_to(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  auto rel = fs::path(p).lexically_relative(base);
  return rel.empty() ? p : rel.string();
}

// Data rows of a headed CSV, each as column-name -> cell.
std::vector<std::map<std::string, std::string>> read_table(
    const std::string& path, const std::vector<std::string>& required,
    std::vector<std::string>* comments = nullptr) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      if (comments) comments->push_back(t.substr(1));
      continue;
    }
    auto cells = split_csv(t);
    if (header.empty()) {
      header = cells;
      for (const auto& r : required) {
        if (std::find(header.begin(), header.end(), r) == header.end()) {
          throw DataError(path + ": missing required column '" + r + "'");
        }
      }
      continue;
    }
    if (cells.size() > header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": too many cells");
    }
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      row[header[i]] = i < cells.size() ? cells[i] : std::string{};
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw DataError(path + ": missing header row");
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// Manifest

void DatasetManifest::validate() const {
  if (num_classes < 1) throw DataError("manifest: num_classes must be >= 1");
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (r.sample_id.empty()) throw DataError("manifest: empty sample_id");
    if (r.video_path.empty()) throw DataError("manifest: empty video_path for " + r.sample_id);
    if (!seen.insert(r.sample_id).second) {
      throw DataError("manifest: duplicate sample_id '" + r.sample_id + "'");
    }
    if (r.label < 0 || r.label >= num_classes) {
      throw DataError("manifest: label " + std::to_string(r.label) + " of '" + r.sample_id +
                      "' out of range [0, " + std::to_string(num_classes) + ")");
    }
  }
}

const SampleRecord& DatasetManifest::find(const std::string& id) const {
  for (const auto& r : records) {
    if (r.sample_id == id) return r;
  }
  throw DataError("unknown sample_id '" + id + "'");
}

DatasetManifest load_manifest(const std::string& path) {
  std::vector<std::string> comments;
  auto rows = read_table(path, {"sample_id", "video_path", "label", "subject_id", "camera_view_id"},
                         &comments);
  const auto base = fs::path(path).parent_path();
  DatasetManifest m;
  int declared = -1;
  for (const auto& c : comments) {
    auto eq = c.find('=');
    if (eq != std::string::npos && trim(c.substr(0, eq)) == "num_classes") {
      declared = parse_num<int>(trim(c.substr(eq + 1)), "num_classes");
    }
  }
  int max_label = -1;
  for (auto& row : rows) {
    SampleRecord r;
    r.sample_id = row["sample_id"];
    r.video_path = resolve(base, row["video_path"]);
    r.label = parse_num<int>(row["label"], "label");
    r.subject_id = parse_num<int>(row["subject_id"], "subject_id");
    r.camera_view_id = parse_num<int>(row["camera_view_id"], "camera_view_id");
    if (auto it = row.find("boxes_path"); it != row.end() && !it->second.empty()) {
      r.boxes_path = resolve(base, it->second);
    }
    if (auto it = row.find("skeleton_path"); it != row.end() && !it->second.empty()) {
      r.skeleton_path = resolve(base, it->second);
    }
    max_label = std::max(max_label, r.label);
    m.records.push_back(std::move(r));
  }
  m.num_classes = declared > 0 ? declared : max_label + 1;
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  manifest.validate();
  const auto base = fs::path(path).parent_path();
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "# num_classes = " << manifest.num_classes << '\n';
  os << "sample_id,video_path,label,subject_id,camera_view_id,boxes_path,skeleton_path\n";
  for (const auto& r : manifest.records) {
    os << r.sample_id << ',' << relative_to(base, r.video_path) << ',' << r.label << ','
       << r.subject_id << ',' << r.camera_view_id << ','
       << (r.boxes_path ? relative_to(base, *r.boxes_path) : "") << ','
       << (r.skeleton_path ? relative_to(base, *r.skeleton_path) : "") << '\n';
  }
  if (!os) throw DataError("write failed: " + path);
}

Split make_split(const DatasetManifest& manifest, const SplitSpec& spec) {
  Split out;
  if (spec.mode == SplitMode::explicit_ids) {
    std::unordered_set<std::string> train(spec.train_ids.begin(), spec.train_ids.end());
    for (const auto& id : spec.test_ids) {
      if (train.count(id)) throw DataError("split: id '" + id + "' in both train and test");
    }
    for (const auto& id : spec.train_ids) manifest.find(id);
    for (const auto& id : spec.test_ids) manifest.find(id);
    out.train = spec.train_ids;
    out.test = spec.test_ids;
  } else {
    if (!spec.test_keys.empty()) {
      for (int k : spec.test_keys) {
        if (spec.train_keys.count(k)) {
          throw DataError("split: key " + std::to_string(k) + " in both train and test");
        }
      }
    }
    for (const auto& r : manifest.records) {
      const int key = spec.mode == SplitMode::cross_subject ? r.subject_id : r.camera_view_id;
      if (spec.train_keys.count(key)) {
        out.train.push_back(r.sample_id);
      } else if (spec.test_keys.empty() || spec.test_keys.count(key)) {
        out.test.push_back(r.sample_id);
      }
    }
  }
  if (out.train.empty()) throw DataError("split: empty train side");
  if (out.test.empty()) throw DataError("split: empty test side");
  return out;
}

// ---------------------------------------------------------------------------
// Sidecars

std::vector<BBox> load_boxes(const std::string& path) {
  std::vector<BBox> out;
  for (auto& row : read_table(path, {"frame_index", "x", "y", "w", "h"})) {
    BBox b;
    b.frame_index = parse_num<int>(row["frame_index"], "frame_index");
    b.x = parse_num<int>(row["x"], "x");
    b.y = parse_num<int>(row["y"], "y");
    b.w = parse_num<int>(row["w"], "w");
    b.h = parse_num<int>(row["h"], "h");
    if (b.frame_index < 0 || b.w <= 0 || b.h <= 0) {
      throw DataError(path + ": invalid box at frame " + std::to_string(b.frame_index));
    }
    out.push_back(b);
  }
  return out;
}

void save_boxes(const std::vector<BBox>& boxes, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "frame_index,x,y,w,h\n";
  for (const auto& b : boxes) {
    os << b.frame_index << ',' << b.x << ',' << b.y << ',' << b.w << ',' << b.h << '\n';
  }
}

std::vector<SkeletonFrame> load_skeleton(const std::string& path) {
  std::map<int, std::map<int, Joint>> by_frame;
  for (auto& row : read_table(path, {"frame_index", "joint_index", "x", "y"})) {
    const int f = parse_num<int>(row["frame_index"], "frame_index");
    const int j = parse_num<int>(row["joint_index"], "joint_index");
    if (f < 0) throw DataError(path + ": negative frame_index");
    by_frame[f][j] = Joint{parse_num<double>(row["x"], "x"), parse_num<double>(row["y"], "y")};
  }
  std::vector<SkeletonFrame> out;
  for (auto& [f, joints] : by_frame) {
    SkeletonFrame sf;
    sf.frame_index = f;
    for (auto& [j, p] : joints) sf.joints.push_back(p);
    out.push_back(std::move(sf));
  }
  return out;
}

void save_skeleton(const std::vector<SkeletonFrame>& frames, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "frame_index,joint_index,x,y\n";
  char buf[64];
  for (const auto& f : frames) {
    for (std::size_t j = 0; j < f.joints.size(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.3f,%.3f", f.joints[j].x, f.joints[j].y);
      os << f.frame_index << ',' << j << ',' << buf << '\n';
    }
  }
}

}  // namespace mvdi
