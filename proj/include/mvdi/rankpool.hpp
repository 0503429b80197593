#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvdi/depthio.hpp"
#include "mvdi/viewsynth.hpp"

namespace mvdi {

/// Rank-pooling parameter vector, one entry per pixel of the pooled frames.
struct RankingVector {
  int width = 0;
  int height = 0;
  std::vector<double> u;
};

/// Running frame averages V_t = (1/t) * sum_{i<=t} I_i over flattened frames.
struct PrefixMeans {
  int width = 0;
  int height = 0;
  std::vector<std::vector<double>> v;

  int length() const { return static_cast<int>(v.size()); }
};

enum class PoolVariant { exact_ranksvm, approx_prefix, approx_frames };

PoolVariant parse_pool_variant(const std::string& s);
std::string to_string(PoolVariant v);

struct PoolConfig {
  double lambda = 1.0;
  int max_iters = 200;
  // Base step for the exact solver; unset means 1e-3 / d.
  std::optional<double> step_size;
  std::uint64_t seed = 0;
  PoolVariant variant = PoolVariant::approx_prefix;

  void validate() const;
};

/// 8-bit image form of a pooled vector (or a DMM).
struct DynamicImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
  ViewSpec view;
  int segment = -1;  // -1: whole video, otherwise segment index

  bool operator==(const DynamicImage&) const = default;
};

struct SegmentSpec {
  int num_segments = 4;
  double overlap = 0.5;

  void validate() const;
};

PrefixMeans prefix_means(const DepthVideo& video);

/// <u, v>. Throws DataError on dimension mismatch.
double score(const RankingVector& u, std::span<const double> v);

/// (lambda/2)|u|^2 + 2/(T(T-2)) * sum_{q>t} max(0, 1 - S(q|u) + S(t|u)); T >= 3.
double rank_objective(const PrefixMeans& means, std::span<const double> u, double lambda);

/// Minimizes rank_objective by full-batch subgradient descent from u = 0 with
/// step step_size/sqrt(k); returns the best iterate seen.
RankingVector exact_rank_pool(const PrefixMeans& means, const PoolConfig& cfg);

/// Per-frame weights of the closed-form approximations, indexed t = 0..T-1.
std::vector<double> approx_frames_coefficients(int T);
std::vector<double> approx_prefix_coefficients(int T);

RankingVector approx_rank_pool(const DepthVideo& video, const PoolConfig& cfg);

/// Dispatches on cfg.variant.
RankingVector rank_pool(const DepthVideo& video, const PoolConfig& cfg);

/// Min-max normalization to [0,255] with round-half-up; constant input -> 128.
DynamicImage to_dynamic_image(const RankingVector& u);

struct SegmentRange {
  int start = 0;
  int length = 0;
};

std::vector<SegmentRange> segment_ranges(int T, const SegmentSpec& spec);
std::vector<DepthVideo> temporal_segments(const DepthVideo& video, const SegmentSpec& spec);

struct ViewImages {
  ViewSpec view;
  std::vector<DynamicImage> images;  // [whole, segment 0, segment 1, ...]
};

/// Project to every view, then pool the whole video and each temporal segment.
std::vector<ViewImages> extract_mvdi(const DepthVideo& video, const std::vector<ViewSpec>& views,
                                     const PoolConfig& cfg, const SegmentSpec& spec,
                                     const ProjectionConfig& pcfg);

/// Depth motion map: per-pixel count of |I_{i+1} - I_i| > epsilon, normalized
/// like a dynamic image.
std::vector<double> dmm_counts(const DepthVideo& video, double epsilon);
DynamicImage compute_dmm(const DepthVideo& video, double epsilon);

}  // namespace mvdi
