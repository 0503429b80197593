#include "mvdi/rankpool.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvdi/error.hpp"

namespace mvdi {

PoolVariant parse_pool_variant(const std::string& s) {
  if (s == "exact" || s == "exact_ranksvm") return PoolVariant::exact_ranksvm;
  if (s == "approx-prefix" || s == "approx_prefix") return PoolVariant::approx_prefix;
  if (s == "approx-frames" || s == "approx_frames") return PoolVariant::approx_frames;
  throw ConfigError("unknown pooling variant '" + s + "'");
}

std::string to_string(PoolVariant v) {
  switch (v) {
    case PoolVariant::exact_ranksvm: return "exact_ranksvm";
    case PoolVariant::approx_prefix: return "approx_prefix";
    case PoolVariant::approx_frames: return "approx_frames";
  }
  return "?";
}

void PoolConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("pool lambda must be > 0");
  if (max_iters < 1) throw ConfigError("pool max_iters must be >= 1");
  if (step_size && !(*step_size > 0.0)) throw ConfigError("pool step_size must be > 0");
}

void SegmentSpec::validate() const {
  if (num_segments < 1) throw ConfigError("num_segments must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ConfigError("overlap must lie in [0, 1)");
}

PrefixMeans prefix_means(const DepthVideo& video) {
  video.validate();
  PrefixMeans m;
  m.width = video.width();
  m.height = video.height();
  const std::size_t d = video.frames.front().size();
  std::vector<double> sum(d, 0.0);
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    const auto& f = video.frames[t].depth;
    std::vector<double> v(d);
    const double inv = 1.0 / static_cast<double>(t + 1);
    for (std::size_t k = 0; k < d; ++k) {
      sum[k] += f[k];
      v[k] = sum[k] * inv;
    }
    m.v.push_back(std::move(v));
  }
  return m;
}

double score(const RankingVector& u, std::span<const double> v) {
  if (u.u.size() != v.size()) throw DataError("score: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < v.size(); ++k) s += u.u[k] * v[k];
  return s;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void check_means(const PrefixMeans& means) {
  if (means.length() < 3) {
    throw DataError("exact rank pooling needs T >= 3 (pair weight 2/(T(T-2)) undefined)");
  }
  const std::size_t d = means.v.front().size();
  for (const auto& v : means.v) {
    if (v.size() != d) throw DataError("prefix means of unequal dimension");
  }
}

}  // namespace

double rank_objective(const PrefixMeans& means, std::span<const double> u, double lambda) {
  check_means(means);
  const int T = means.length();
  std::vector<double> s(T);
  for (int t = 0; t < T; ++t) s[t] = dot(u, means.v[t]);
  double hinge = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int q = t + 1; q < T; ++q) hinge += std::max(0.0, 1.0 - s[q] + s[t]);
  }
  return 0.5 * lambda * dot(u, u) + 2.0 / (static_cast<double>(T) * (T - 2)) * hinge;
}

RankingVector exact_rank_pool(const PrefixMeans& means, const PoolConfig& cfg) {
  cfg.validate();
  check_means(means);
  const int T = means.length();
  const std::size_t d = means.v.front().size();
  const double w = 2.0 / (static_cast<double>(T) * (T - 2));
  const double eta0 = cfg.step_size.value_or(1e-3 / static_cast<double>(d));

  std::vector<double> u(d, 0.0), grad(d), s(T), coef(T);
  RankingVector best{means.width, means.height, u};
  double best_obj = rank_objective(means, u, cfg.lambda);

  for (int k = 1; k <= cfg.max_iters; ++k) {
    for (int t = 0; t < T; ++t) s[t] = dot(u, means.v[t]);
    // Each violated pair (t < q) contributes (V_t - V_q) to the subgradient.
    std::fill(coef.begin(), coef.end(), 0.0);
    for (int t = 0; t < T; ++t) {
      for (int q = t + 1; q < T; ++q) {
        if (1.0 - s[q] + s[t] > 0.0) {
          coef[t] += w;
          coef[q] -= w;
        }
      }
    }
    for (std::size_t j = 0; j < d; ++j) grad[j] = cfg.lambda * u[j];
    for (int t = 0; t < T; ++t) {
      if (coef[t] == 0.0) continue;
      const auto& v = means.v[t];
      for (std::size_t j = 0; j < d; ++j) grad[j] += coef[t] * v[j];
    }
    const double eta = eta0 / std::sqrt(static_cast<double>(k));
    for (std::size_t j = 0; j < d; ++j) u[j] -= eta * grad[j];

    const double obj = rank_objective(means, u, cfg.lambda);
    if (!std::isfinite(obj)) throw NumericError("exact rank pooling diverged (non-finite objective)");
    if (obj < best_obj) {
      best_obj = obj;
      best.u = u;
    }
  }
  return best;
}

std::vector<double> approx_frames_coefficients(int T) {
  std::vector<double> c(T);
  for (int t = 1; t <= T; ++t) c[t - 1] = 2.0 * t - T - 1.0;
  return c;
}

std::vector<double> approx_prefix_coefficients(int T) {
  std::vector<double> harmonic(T + 1, 0.0);
  for (int i = 1; i <= T; ++i) harmonic[i] = harmonic[i - 1] + 1.0 / i;
  std::vector<double> c(T);
  for (int t = 1; t <= T; ++t) {
    c[t - 1] = 2.0 * (T - t + 1) - (T + 1.0) * (harmonic[T] - harmonic[t - 1]);
  }
  return c;
}

RankingVector approx_rank_pool(const DepthVideo& video, const PoolConfig& cfg) {
  video.validate();
  const int T = video.length();
  std::vector<double> coef;
  switch (cfg.variant) {
    case PoolVariant::approx_frames: coef = approx_frames_coefficients(T); break;
    case PoolVariant::approx_prefix: coef = approx_prefix_coefficients(T); break;
    default: throw ConfigError("approx_rank_pool: variant must be approx_prefix or approx_frames");
  }
  RankingVector r{video.width(), video.height(), std::vector<double>(video.frames.front().size(), 0.0)};
  for (int t = 0; t < T; ++t) {
    const double c = coef[t];
    if (c == 0.0) continue;
    const auto& f = video.frames[t].depth;
    for (std::size_t k = 0; k < f.size(); ++k) r.u[k] += c * f[k];
  }
  return r;
}

RankingVector rank_pool(const DepthVideo& video, const PoolConfig& cfg) {
  if (cfg.variant == PoolVariant::exact_ranksvm) return exact_rank_pool(prefix_means(video), cfg);
  return approx_rank_pool(video, cfg);
}

DynamicImage to_dynamic_image(const RankingVector& u) {
  DynamicImage img;
  img.width = u.width;
  img.height = u.height;
  if (u.u.size() != static_cast<std::size_t>(u.width) * u.height) {
    throw DataError("ranking vector size does not match its dimensions");
  }
  img.pixels.assign(u.u.size(), 128);
  if (u.u.empty()) return img;
  for (double x : u.u) {
    if (!std::isfinite(x)) throw NumericError("non-finite ranking vector entry");
  }
  const auto [lo, hi] = std::minmax_element(u.u.begin(), u.u.end());
  const double mn = *lo, mx = *hi;
  if (mx == mn) return img;
  const double scale = 255.0 / (mx - mn);
  for (std::size_t k = 0; k < u.u.size(); ++k) {
    const double v = std::floor((u.u[k] - mn) * scale + 0.5);
    img.pixels[k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return img;
}

std::vector<SegmentRange> segment_ranges(int T, const SegmentSpec& spec) {
  spec.validate();
  const int n = spec.num_segments;
  if (T < n) {
    throw DataError("temporal_segments: T=" + std::to_string(T) + " < num_segments=" +
                    std::to_string(n));
  }
  const double denom = 1.0 + (n - 1) * (1.0 - spec.overlap);
  const int L = std::min(T, static_cast<int>(std::ceil(T / denom - 1e-12)));
  const int stride = std::max(1, static_cast<int>(std::floor(L * (1.0 - spec.overlap) + 0.5)));
  std::vector<SegmentRange> out;
  for (int k = 0; k < n; ++k) {
    int start = std::min(k * stride, T - L);
    if (k == n - 1) start = T - L;
    out.push_back({start, L});
  }
  return out;
}

std::vector<DepthVideo> temporal_segments(const DepthVideo& video, const SegmentSpec& spec) {
  video.validate();
  std::vector<DepthVideo> out;
  for (const auto& r : segment_ranges(video.length(), spec)) {
    DepthVideo seg;
    seg.frames.assign(video.frames.begin() + r.start, video.frames.begin() + r.start + r.length);
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<ViewImages> extract_mvdi(const DepthVideo& video, const std::vector<ViewSpec>& views,
                                     const PoolConfig& cfg, const SegmentSpec& spec,
                                     const ProjectionConfig& pcfg) {
  cfg.validate();
  spec.validate();
  const auto projected = project_video(video, views, pcfg);
  std::vector<ViewImages> out;
  for (std::size_t i = 0; i < views.size(); ++i) {
    ViewImages vi{views[i], {}};
    auto whole = to_dynamic_image(rank_pool(projected[i], cfg));
    whole.view = views[i];
    vi.images.push_back(std::move(whole));
    const auto segs = temporal_segments(projected[i], spec);
    for (std::size_t s = 0; s < segs.size(); ++s) {
      auto img = to_dynamic_image(rank_pool(segs[s], cfg));
      img.view = views[i];
      img.segment = static_cast<int>(s);
      vi.images.push_back(std::move(img));
    }
    out.push_back(std::move(vi));
  }
  return out;
}

std::vector<double> dmm_counts(const DepthVideo& video, double epsilon) {
  video.validate();
  if (video.length() < 2) throw DataError("DMM needs T >= 2");
  if (!(epsilon >= 0.0)) throw ConfigError("DMM epsilon must be >= 0");
  std::vector<double> count(video.frames.front().size(), 0.0);
  for (int i = 0; i + 1 < video.length(); ++i) {
    const auto& a = video.frames[i].depth;
    const auto& b = video.frames[i + 1].depth;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = std::abs(static_cast<double>(b[k]) - static_cast<double>(a[k]));
      if (diff > epsilon) count[k] += 1.0;
    }
  }
  return count;
}

DynamicImage compute_dmm(const DepthVideo& video, double epsilon) {
  return to_dynamic_image(RankingVector{video.width(), video.height(), dmm_counts(video, epsilon)});
}

}  // namespace mvdi
