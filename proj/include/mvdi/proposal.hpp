#pragma once

#include <vector>

#include "mvdi/depthio.hpp"

namespace mvdi {

/// Spatio-temporal crop region. Spatial bounds are half-open, frame bounds
/// inclusive.
struct ProposalCube {
  int x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  int t0 = 0, t1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool contains(const BBox& b) const {
    return b.x >= x0 && b.y >= y0 && b.x + b.w <= x1 && b.y + b.h <= y1 && b.frame_index >= t0 &&
           b.frame_index <= t1;
  }
  bool operator==(const ProposalCube&) const = default;
};

/// Tight rectangle over each frame's joints (min corner floored, max corner
/// ceiled, sides at least 1). Frames without joints are skipped.
std::vector<BBox> boxes_from_skeleton(const std::vector<SkeletonFrame>& joints);

/// Minimal cube covering every box. Throws DataError on an empty list.
ProposalCube merge_boxes(const std::vector<BBox>& boxes);

/// Moves each spatial side outward by `margin`, clipped to the frame.
ProposalCube extend_cube(const ProposalCube& cube, int margin, int frame_w, int frame_h);

/// Margin for a frame width, scaled from 30 px at 320 px width.
int scaled_margin(int frame_w, int native_margin = 30, int native_width = 320);

DepthVideo crop_video(const DepthVideo& video, const ProposalCube& cube);

}  // namespace mvdi
