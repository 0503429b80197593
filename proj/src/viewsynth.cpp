#include "mvdi/viewsynth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mvdi/error.hpp"

namespace mvdi {

void ViewSpec::validate() const {
  if (!(alpha >= -180.0 && alpha <= 180.0) || !(beta >= -180.0 && beta <= 180.0)) {
    throw ConfigError("view angles must lie in [-180, 180]");
  }
}

void ProjectionConfig::validate() const {
  if (!std::isfinite(depth_scale) || depth_scale <= 0.0) {
    throw ConfigError("depth_scale must be finite and positive");
  }
  if (hole_fill_radius < 0) throw ConfigError("hole_fill_radius must be >= 0");
  if (out_width < 0 || out_height < 0) throw ConfigError("output size must be >= 0");
}

std::vector<ViewGroup> default_view_groups() {
  return {
      {1, {{-90, 0}, {-40, 0}}},
      {2, {{-20, 0}, {-10, 0}, {-5, 0}}},
      {3, {{0, 0}}},
      {4, {{5, 0}, {10, 0}, {20, 0}}},
      {5, {{40, 0}, {90, 0}}},
  };
}

std::vector<ViewSpec> flatten_views(const std::vector<ViewGroup>& groups) {
  std::vector<ViewSpec> out;
  for (const auto& g : groups) out.insert(out.end(), g.views.begin(), g.views.end());
  return out;
}

RotationMatrix rotation_matrix(const ViewSpec& view) {
  view.validate();
  const double a = view.alpha * std::numbers::pi / 180.0;
  const double b = view.beta * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cb = std::cos(b), sb = std::sin(b);
  // [1 0 0; 0 cb -sb; 0 sb cb] * [ca 0 sa; 0 1 0; -sa 0 ca]
  return {ca,       0.0, sa,        //
          sb * sa,  cb,  -sb * ca,  //
          -cb * sa, sb,  cb * ca};
}

namespace {

double round_half_up(double v) { return std::floor(v + 0.5); }

// Lower median of the non-zero neighbours, or 0 when fewer than half of the
// window is populated (background stays background).
void fill_holes(DepthFrame& frame, int radius) {
  if (radius <= 0) return;
  const DepthFrame src = frame;
  const int window = (2 * radius + 1) * (2 * radius + 1) - 1;
  std::vector<std::uint16_t> vals;
  for (int y = 0; y < src.height; ++y) {
    for (int x = 0; x < src.width; ++x) {
      if (src.at(x, y) != 0) continue;
      vals.clear();
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= src.width || ny >= src.height) {
            continue;
          }
          if (auto v = src.at(nx, ny); v != 0) vals.push_back(v);
        }
      }
      if (vals.empty() || 2 * static_cast<int>(vals.size()) < window) continue;
      const auto mid = vals.begin() + (vals.size() - 1) / 2;
      std::nth_element(vals.begin(), mid, vals.end());
      frame.at(x, y) = *mid;
    }
  }
}

}  // namespace

DepthFrame reproject_frame(const DepthFrame& frame, const ViewSpec& view,
                           const ProjectionConfig& cfg) {
  cfg.validate();
  const auto r = rotation_matrix(view);
  const int ow = cfg.out_width > 0 ? cfg.out_width : frame.width;
  const int oh = cfg.out_height > 0 ? cfg.out_height : frame.height;
  const double cx = (frame.width - 1) / 2.0, cy = (frame.height - 1) / 2.0;
  const double ocx = (ow - 1) / 2.0, ocy = (oh - 1) / 2.0;

  DepthFrame out(ow, oh);
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const auto d = frame.at(x, y);
      if (d == 0) continue;
      const double px = x - cx, py = y - cy, pz = d * cfg.depth_scale;
      const double qx = r[0] * px + r[1] * py + r[2] * pz;
      const double qy = r[3] * px + r[4] * py + r[5] * pz;
      const double qz = r[6] * px + r[7] * py + r[8] * pz;
      const double ux = round_half_up(qx + ocx), uy = round_half_up(qy + ocy);
      if (ux < 0 || uy < 0 || ux >= ow || uy >= oh) continue;
      const double depth = std::clamp(round_half_up(qz / cfg.depth_scale), 1.0, 65535.0);
      auto& slot = out.at(static_cast<int>(ux), static_cast<int>(uy));
      const auto nd = static_cast<std::uint16_t>(depth);
      if (slot == 0 || nd < slot) slot = nd;
    }
  }
  fill_holes(out, cfg.hole_fill_radius);
  return out;
}

std::vector<DepthVideo> project_video(const DepthVideo& video, const std::vector<ViewSpec>& views,
                                      const ProjectionConfig& cfg) {
  if (views.empty()) throw ConfigError("project_video: no views given");
  video.validate();
  std::vector<DepthVideo> out;
  out.reserve(views.size());
  for (const auto& v : views) {
    DepthVideo dv;
    dv.frames.reserve(video.frames.size());
    for (const auto& f : video.frames) dv.frames.push_back(reproject_frame(f, v, cfg));
    out.push_back(std::move(dv));
  }
  return out;
}

}  // namespace mvdi
