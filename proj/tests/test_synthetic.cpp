#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "tissuedef/error.hpp"
#include "tissuedef/synthetic.hpp"
#include "tissuedef/tracking.hpp"

using namespace tissuedef;

namespace {

constexpr int kH = 64, kW = 64;

// Bump centre placed on the material point seen by pixel (41, 25).
BumpSceneConfig pixel_aligned_config() {
  BumpSceneConfig c;
  c.center_x = (41 - 31.5) / 64.0;
  c.center_y = (25 - 31.5) / 64.0;
  return c;
}

double max_norm(const Image& field) {
  double m = 0;
  for (int r = 0; r < field.height; ++r)
    for (int c = 0; c < field.width; ++c)
      m = std::max(m, Vec3(field.at(r, c, 0), field.at(r, c, 1), field.at(r, c, 2)).norm());
  return m;
}

}  // namespace

TEST(BumpScene, RejectsInvalidConfig) {
  BumpSceneConfig c;
  c.sigma = 0;
  EXPECT_THROW(make_bump_scene(c), ValueError);
  c = {};
  c.amplitude = -0.1;
  EXPECT_THROW(make_bump_scene(c), ValueError);
  c = {};
  c.frames = 1;
  EXPECT_THROW(make_bump_scene(c), ValueError);
  c = {};
  c.amplitude = 1.5;
  EXPECT_THROW(make_bump_scene(c), ValueError);
}

TEST(BumpScene, ScheduleAndPeak) {
  const BumpScene s = make_bump_scene({});
  EXPECT_EQ(s.amplitude_at(0.0), 0.0);
  EXPECT_NEAR(s.amplitude_at(1.0), 0.0, 1e-15);
  for (int k = 0; k < 8; ++k) {
    const double t = s.frame_time(k);
    const Vec3 d = s.surface(0.15, -0.1, t) - s.surface(0.15, -0.1, 0.0);
    EXPECT_NEAR(d.norm(), 0.1 * std::sin(std::numbers::pi * t), 1e-15);
  }
}

TEST(BumpScene, ZeroAmplitudeFramesIdentical) {
  BumpSceneConfig c;
  c.amplitude = 0;
  c.occluder = false;
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const auto seq = render_synthetic_frames(make_bump_scene(c), k);
  ASSERT_EQ(seq.frames.size(), 8u);
  for (std::size_t f = 1; f < seq.frames.size(); ++f) {
    EXPECT_EQ(seq.frames[f].image.data, seq.frames[0].image.data);
    EXPECT_EQ(seq.frames[f].depth.data, seq.frames[0].depth.data);
  }
  for (const Image& d : seq.truth.deformation)
    for (double v : d.data) EXPECT_EQ(v, 0.0);
}

TEST(BumpScene, FlatDepthAtPrincipalPoint) {
  BumpSceneConfig c;
  c.amplitude = 0;
  // cx = 31.5 falls between columns; use an odd width so a column sits on it.
  const Intrinsics k = default_synthetic_intrinsics(33, 33);
  const auto seq = render_synthetic_frames(make_bump_scene(c), k);
  for (int r = 0; r < 33; ++r) EXPECT_NEAR(seq.truth.depth[3].at(r, 16), 1.0, 1e-12);
}

TEST(BumpScene, MaskBorderAndOccluder) {
  BumpSceneConfig c;
  c.occluder = false;
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const BumpScene plain = make_bump_scene(c);
  const auto seq = render_synthetic_frames(plain, k);
  for (const FrameSample& f : seq.frames)
    for (int r = 0; r < kH; ++r)
      for (int col = 0; col < kW; ++col) {
        const bool border = r == 0 || col == 0 || r == kH - 1 || col == kW - 1;
        EXPECT_EQ(f.mask.at(r, col), !border);
      }

  const BumpScene occ = make_bump_scene({});
  const auto seq2 = render_synthetic_frames(occ, k);
  int previous_left = -1;
  for (int fi = 0; fi < 8; ++fi) {
    const auto rect = occ.occluder(fi, k);
    ASSERT_TRUE(rect.has_value());
    EXPECT_GT(rect->col0, previous_left);
    previous_left = rect->col0;
    for (int r = rect->row0; r < rect->row1; ++r)
      for (int col = rect->col0; col < rect->col1; ++col) {
        EXPECT_FALSE(seq2.frames[fi].mask.at(r, col));
        EXPECT_EQ(seq2.frames[fi].depth.at(r, col), 0.0);
      }
  }
}

TEST(BumpScene, DepthBackprojectsOntoSurface) {
  const BumpScene s = make_bump_scene({});
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const auto seq = render_synthetic_frames(s, k);
  for (int fi = 0; fi < 8; ++fi) {
    const double t = s.frame_time(fi);
    for (int r = 0; r < kH; ++r)
      for (int c = 0; c < kW; ++c) {
        const Vec3 p = backproject(c, r, seq.truth.depth[fi].at(r, c), k);
        // Material points move along z only, so the surface point above (x, y) is the hit point.
        EXPECT_NEAR(s.surface(p.x(), p.y(), t).z(), p.z(), 1e-9);
      }
  }
}

TEST(BumpScene, GtDeformationPeakAndDecay) {
  const BumpSceneConfig cfg = pixel_aligned_config();
  const BumpScene s = make_bump_scene(cfg);
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  EXPECT_EQ(max_norm(gt_deformation(s, 0.0, k)), 0.0);
  for (int fi = 1; fi < 8; ++fi) {
    const double t = s.frame_time(fi);
    const Image d = gt_deformation(s, t, k);
    EXPECT_NEAR(max_norm(d), 0.1 * std::sin(std::numbers::pi * t), 1e-9);
    for (int r = 0; r < kH; ++r)
      for (int c = 0; c < kW; ++c) {
        const Vec3 p = backproject(c, r, cfg.base_depth, k);
        const double dist = std::hypot(p.x() - cfg.center_x, p.y() - cfg.center_y);
        if (dist >= 5 * cfg.sigma) {
          EXPECT_LT(Vec3(d.at(r, c, 0), d.at(r, c, 1), d.at(r, c, 2)).norm(), 1e-9);
        }
      }
  }
}

TEST(BumpScene, FarFieldExistsInWideImage) {
  // A wide field of view so some pixels lie 5 sigma from the bump.
  Intrinsics k = default_synthetic_intrinsics(64, 64);
  k.fx = k.fy = 16;
  const BumpScene s = make_bump_scene({});
  const Image d = gt_deformation(s, 0.5, k);
  int far = 0;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const Vec3 p = backproject(c, r, 1.0, k);
      if (std::hypot(p.x() - 0.15, p.y() + 0.1) >= 1.0) {
        ++far;
        EXPECT_LT(std::abs(d.at(r, c, 2)), 1e-9);
      }
    }
  EXPECT_GT(far, 100);
}

TEST(OracleTracks, StaticSceneIsConstant) {
  BumpSceneConfig c;
  c.amplitude = 0;
  c.occluder = false;
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const KeypointGrid g = sample_grid(kH, kW, 16, 16);
  const TrackGrid t = oracle_tracks(make_bump_scene(c), g, k, std::vector<Pose>(8));
  for (int f = 0; f < 8; ++f)
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        EXPECT_EQ(t.point(f, i, j), g.at(i, j));
        EXPECT_TRUE(t.is_visible(f, i, j));
      }
}

TEST(OracleTracks, ProjectionOfLiftedMaterialPoint) {
  const BumpScene s = make_bump_scene({});
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const KeypointGrid g = sample_grid(kH, kW, 16, 16);
  const TrackGrid t = oracle_tracks(s, g, k, std::vector<Pose>(8));
  EXPECT_NO_THROW(t.validate());
  for (int f = 0; f < 8; ++f) {
    const double time = s.frame_time(f);
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) {
        const Vec2 p0 = g.at(i, j);
        const Vec3 m = backproject(p0.x(), p0.y(), s.ray_depth(p0.x(), p0.y(), 0.0, k), k);
        const Vec3 moved = s.surface(m.x(), m.y(), time);
        const Vec2 expect = project(moved, k);
        EXPECT_NEAR(t.point(f, i, j).x(), expect.x(), 1e-9);
        EXPECT_NEAR(t.point(f, i, j).y(), expect.y(), 1e-9);
        // Lifting the track with the scene depth returns the material point.
        const Vec2 q = t.point(f, i, j);
        const Vec3 lifted = backproject(q.x(), q.y(), s.ray_depth(q.x(), q.y(), time, k), k);
        EXPECT_LT((lifted - moved).norm(), 1e-9);
        const auto rect = s.occluder(f, k);
        EXPECT_EQ(t.is_visible(f, i, j), !rect->contains(q.x(), q.y()));
      }
  }
}

TEST(OracleTracks, DeformationConsistentWithTracks) {
  const BumpScene s = make_bump_scene({});
  const Intrinsics k = default_synthetic_intrinsics(kH, kW);
  const KeypointGrid g = sample_grid(kH, kW, 16, 16);
  const TrackGrid t = oracle_tracks(s, g, k, std::vector<Pose>(8));
  const Image d = gt_deformation(s, s.frame_time(3), k);
  // Keypoints sit on integer pixels for 64/16, so the dense GT applies directly.
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      const Vec2 p0 = g.at(i, j);
      const int r = static_cast<int>(p0.y()), c = static_cast<int>(p0.x());
      const Vec3 ref = backproject(p0.x(), p0.y(), s.ray_depth(p0.x(), p0.y(), 0.0, k), k);
      const Vec3 moved = ref + Vec3(d.at(r, c, 0), d.at(r, c, 1), d.at(r, c, 2));
      const Vec2 q = t.point(3, i, j);
      const Vec3 lifted = backproject(q.x(), q.y(), s.ray_depth(q.x(), q.y(), s.frame_time(3), k), k);
      EXPECT_LT((lifted - moved).norm(), 1e-9);
    }
}

TEST(BumpScene, DeterministicTexture) {
  const Intrinsics k = default_synthetic_intrinsics(32, 32);
  const auto a = render_synthetic_frames(make_bump_scene({}), k);
  const auto b = render_synthetic_frames(make_bump_scene({}), k);
  for (int f = 0; f < 8; ++f) EXPECT_EQ(a.frames[f].image.data, b.frames[f].image.data);
  BumpSceneConfig other;
  other.texture_seed = 8;
  const auto c = render_synthetic_frames(make_bump_scene(other), k);
  EXPECT_NE(a.frames[0].image.data, c.frames[0].image.data);
  EXPECT_EQ(a.truth.depth[5].data, c.truth.depth[5].data);
}
