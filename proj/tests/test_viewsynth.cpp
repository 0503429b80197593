#include <doctest.h>

#include <random>

#include "mvdi/error.hpp"
#include "mvdi/viewsynth.hpp"
#include "oracles.hpp"

using namespace mvdi;

TEST_CASE("default view groups match the five-group table") {
  const auto g = default_view_groups();
  REQUIRE(g.size() == 5);
  CHECK(g[0].views == std::vector<ViewSpec>{{-90, 0}, {-40, 0}});
  CHECK(g[1].views == std::vector<ViewSpec>{{-20, 0}, {-10, 0}, {-5, 0}});
  CHECK(g[2].views == std::vector<ViewSpec>{{0, 0}});
  CHECK(g[3].views == std::vector<ViewSpec>{{5, 0}, {10, 0}, {20, 0}});
  CHECK(g[4].views == std::vector<ViewSpec>{{40, 0}, {90, 0}});
  for (int i = 0; i < 5; ++i) CHECK(g[i].group_id == i + 1);
  CHECK(flatten_views(g).size() == 11);
}

TEST_CASE("rotation matrix examples") {
  const auto id = rotation_matrix({0, 0});
  for (int i = 0; i < 9; ++i) CHECK(id[i] == (i % 4 == 0 ? 1.0 : 0.0));

  const auto r = rotation_matrix({90, 0});
  // Column 0 is R * (1,0,0).
  CHECK(r[0] == doctest::Approx(0).epsilon(1e-15));
  CHECK(std::abs(r[0]) < 1e-15);
  CHECK(std::abs(r[3]) < 1e-15);
  CHECK(r[6] == doctest::Approx(-1.0));

  const auto got = rotation_matrix({10, 5});
  const auto want = oracle::rotation(10, 5);
  for (int i = 0; i < 9; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-12);
}

TEST_CASE("rotation matrices are orthonormal with unit determinant") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ang(-180, 180);
  for (int n = 0; n < 200; ++n) {
    const auto r = rotation_matrix({ang(rng), ang(rng)});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += r[k * 3 + i] * r[k * 3 + j];
        CHECK(std::abs(s - (i == j)) < 1e-10);
      }
    const double det = r[0] * (r[4] * r[8] - r[5] * r[7]) - r[1] * (r[3] * r[8] - r[5] * r[6]) +
                       r[2] * (r[3] * r[7] - r[4] * r[6]);
    CHECK(std::abs(det - 1) < 1e-10);
  }
  CHECK_THROWS_AS(rotation_matrix({181, 0}), ConfigError);
}

TEST_CASE("identity view reprojects bit-exactly") {
  std::mt19937_64 rng(5);
  ProjectionConfig cfg;
  cfg.hole_fill_radius = 0;
  for (int n = 0; n < 20; ++n) {
    const auto v = oracle::random_video(rng, 17, 13, 1, 65535, 0.3);
    CHECK(reproject_frame(v.frames[0], {0, 0}, cfg) == v.frames[0]);
  }
}

TEST_CASE("z-buffer keeps the nearest surface") {
  // alpha = 90 maps P = (x, y, z) to (z, y, -x): points sharing z but with
  // different negative x collide in one output column at depths -x.
  ProjectionConfig cfg;
  cfg.hole_fill_radius = 0;
  cfg.depth_scale = 1.0;
  DepthFrame f(9, 9);
  f.at(2, 4) = 2;  // P = (-2, 0, 2) -> (2, 0, 2)
  f.at(1, 4) = 2;  // P = (-3, 0, 2) -> (2, 0, 3)
  const auto out = reproject_frame(f, {90, 0}, cfg);
  CHECK(out.at(6, 4) == 2);
  int nonzero = 0;
  for (auto d : out.depth) nonzero += d != 0;
  CHECK(nonzero == 1);
  CHECK(out == oracle::reproject(f, 90, 0, 1.0, 0));
}

TEST_CASE("reprojection equals the per-point oracle") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(-90, 90);
  for (int n = 0; n < 60; ++n) {
    const int w = 4 + static_cast<int>(rng() % 29), h = 4 + static_cast<int>(rng() % 29);
    const auto v = oracle::random_video(rng, w, h, 1, 1200, 0.5);
    ProjectionConfig cfg;
    cfg.hole_fill_radius = static_cast<int>(rng() % 3);
    cfg.depth_scale = n % 2 ? 0.1 : 0.05;
    const double a = ang(rng), b = n % 3 ? 0.0 : ang(rng);
    CHECK(reproject_frame(v.frames[0], {a, b}, cfg) ==
          oracle::reproject(v.frames[0], a, b, cfg.depth_scale, cfg.hole_fill_radius));
  }
}

TEST_CASE("small rotations nearly invert") {
  // Dense smooth surface so resampling losses stay small.
  DepthFrame f(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) f.at(x, y) = static_cast<std::uint16_t>(400 + 2 * x + y);
  ProjectionConfig cfg;
  for (double a : {-10.0, -5.0, 5.0, 10.0}) {
    const auto back = reproject_frame(reproject_frame(f, {a, 0}, cfg), {-a, 0}, cfg);
    int good = 0, total = 0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        if (back.at(x, y) == 0) continue;
        ++total;
        good += std::abs(int(back.at(x, y)) - int(f.at(x, y))) <= 2;
      }
    REQUIRE(total > 0);
    CHECK(static_cast<double>(good) / total >= 0.9);
  }
}

TEST_CASE("project_video") {
  std::mt19937_64 rng(1);
  const auto v = oracle::random_video(rng, 12, 10, 16, 900, 0.4);
  ProjectionConfig cfg;
  const auto views = flatten_views(default_view_groups());
  const auto out = project_video(v, views, cfg);
  REQUIRE(out.size() == 11);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].length() == 16);
    for (int t = 0; t < 16; ++t) CHECK(out[i].frames[t] == reproject_frame(v.frames[t], views[i], cfg));
  }
  cfg.hole_fill_radius = 0;
  CHECK(project_video(v, {{0, 0}}, cfg).front() == v);
  CHECK_THROWS_AS(project_video(v, {}, cfg), ConfigError);
}
