#pragma once

#include <array>
#include <vector>

#include "mvdi/depthio.hpp"

namespace mvdi {

/// Virtual camera pose in degrees: alpha about the vertical axis, beta about
/// the horizontal axis. Both lie in [-180, 180].
struct ViewSpec {
  double alpha = 0.0;
  double beta = 0.0;

  void validate() const;
  bool operator==(const ViewSpec&) const = default;
};

struct ViewGroup {
  int group_id = 0;
  std::vector<ViewSpec> views;
};

/// Row-major 3x3.
using RotationMatrix = std::array<double, 9>;

struct ProjectionConfig {
  double depth_scale = 0.1;  // sensor units -> pixel-commensurate length
  int hole_fill_radius = 1;
  int out_width = 0;  // 0: same as input
  int out_height = 0;

  void validate() const;
};

/// The five alpha groups (beta = 0): {-90,-40}, {-20,-10,-5}, {0}, {5,10,20}, {40,90}.
std::vector<ViewGroup> default_view_groups();
std::vector<ViewSpec> flatten_views(const std::vector<ViewGroup>& groups);

/// R = R_horizontal(beta) * R_vertical(alpha), right-handed.
RotationMatrix rotation_matrix(const ViewSpec& view);

/// Rotates every non-zero depth pixel about the frame center and re-images it
/// with a nearest-surface z-buffer, then optionally fills holes.
DepthFrame reproject_frame(const DepthFrame& frame, const ViewSpec& view,
                           const ProjectionConfig& cfg);

/// One synthesized video per view, frame count preserved.
std::vector<DepthVideo> project_video(const DepthVideo& video, const std::vector<ViewSpec>& views,
                                      const ProjectionConfig& cfg);

}  // namespace mvdi
