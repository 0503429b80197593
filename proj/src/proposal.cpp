#include "mvdi/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvdi/error.hpp"

namespace mvdi {

std::vector<BBox> boxes_from_skeleton(const std::vector<SkeletonFrame>& joints) {
  std::vector<BBox> out;
  for (const auto& f : joints) {
    if (f.joints.empty()) continue;
    double mnx = std::numeric_limits<double>::infinity(), mny = mnx;
    double mxx = -mnx, mxy = -mnx;
    for (const auto& j : f.joints) {
      mnx = std::min(mnx, j.x);
      mny = std::min(mny, j.y);
      mxx = std::max(mxx, j.x);
      mxy = std::max(mxy, j.y);
    }
    BBox b;
    b.frame_index = f.frame_index;
    b.x = static_cast<int>(std::floor(mnx));
    b.y = static_cast<int>(std::floor(mny));
    b.w = std::max(1, static_cast<int>(std::ceil(mxx)) - b.x);
    b.h = std::max(1, static_cast<int>(std::ceil(mxy)) - b.y);
    out.push_back(b);
  }
  return out;
}

ProposalCube merge_boxes(const std::vector<BBox>& boxes) {
  if (boxes.empty()) throw DataError("merge_boxes: no boxes");
  ProposalCube c{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                 std::numeric_limits<int>::min(), std::numeric_limits<int>::min(),
                 std::numeric_limits<int>::max(), std::numeric_limits<int>::min()};
  for (const auto& b : boxes) {
    if (b.w <= 0 || b.h <= 0) throw DataError("merge_boxes: box with non-positive size");
    c.x0 = std::min(c.x0, b.x);
    c.y0 = std::min(c.y0, b.y);
    c.x1 = std::max(c.x1, b.x + b.w);
    c.y1 = std::max(c.y1, b.y + b.h);
    c.t0 = std::min(c.t0, b.frame_index);
    c.t1 = std::max(c.t1, b.frame_index);
  }
  return c;
}

ProposalCube extend_cube(const ProposalCube& cube, int margin, int frame_w, int frame_h) {
  if (margin < 0) throw ConfigError("extend_cube: margin must be >= 0");
  ProposalCube c = cube;
  c.x0 = std::max(0, cube.x0 - margin);
  c.y0 = std::max(0, cube.y0 - margin);
  c.x1 = std::min(frame_w, cube.x1 + margin);
  c.y1 = std::min(frame_h, cube.y1 + margin);
  return c;
}

int scaled_margin(int frame_w, int native_margin, int native_width) {
  return static_cast<int>(std::lround(static_cast<double>(native_margin) * frame_w / native_width));
}

DepthVideo crop_video(const DepthVideo& video, const ProposalCube& cube) {
  video.validate();
  const int x0 = std::max(0, cube.x0), y0 = std::max(0, cube.y0);
  const int x1 = std::min(video.width(), cube.x1), y1 = std::min(video.height(), cube.y1);
  const int t0 = std::max(0, cube.t0), t1 = std::min(video.length() - 1, cube.t1);
  if (x0 >= x1 || y0 >= y1 || t0 > t1) throw DataError("crop_video: cube does not intersect video");
  DepthVideo out;
  for (int t = t0; t <= t1; ++t) {
    const auto& src = video.frames[t];
    DepthFrame f(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y) {
      std::copy_n(src.depth.begin() + static_cast<std::ptrdiff_t>(y) * src.width + x0, x1 - x0,
                  f.depth.begin() + static_cast<std::ptrdiff_t>(y - y0) * f.width);
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace mvdi
