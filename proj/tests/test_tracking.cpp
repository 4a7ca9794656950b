#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/tracking.hpp"

using namespace tissuedef;

namespace {

Image random_lattice(int hg, int wg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5, 5);
  Image l(hg, wg, 2);
  for (double& v : l.data) v = u(rng);
  return l;
}

TrackGrid static_tracks(int T, int H, int W, int hg, int wg) {
  const KeypointGrid grid = sample_grid(H, W, hg, wg);
  TrackGrid t;
  t.frames = T;
  t.grid_height = hg;
  t.grid_width = wg;
  t.image_height = H;
  t.image_width = W;
  for (int f = 0; f < T; ++f) t.points.insert(t.points.end(), grid.positions.begin(), grid.positions.end());
  t.visible.assign(t.points.size(), 1);
  return t;
}

}  // namespace

TEST(SampleGrid, CellCentres) {
  const KeypointGrid g = sample_grid(100, 100, 2, 2);
  ASSERT_EQ(g.positions.size(), 4u);
  EXPECT_EQ(g.at(0, 0), Vec2(25, 25));
  EXPECT_EQ(g.at(0, 1), Vec2(75, 25));
  EXPECT_EQ(g.at(1, 0), Vec2(25, 75));
  EXPECT_EQ(g.at(1, 1), Vec2(75, 75));
}

TEST(SampleGrid, BoundsAndSpacing) {
  EXPECT_THROW(sample_grid(100, 100, 1, 1), ValueError);
  EXPECT_THROW(sample_grid(10, 10, 11, 4), ValueError);
  const KeypointGrid g = sample_grid(48, 64, 6, 16);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j + 1 < 16; ++j) EXPECT_EQ(g.at(i, j + 1).x() - g.at(i, j).x(), 4.0);
}

TEST(Tracks, JsonRoundTrip) {
  TrackGrid t = static_tracks(2, 20, 20, 2, 2);
  t.point(1, 0, 1) += Vec2(0.25, -1.5);
  t.visible[t.index(1, 1, 1)] = 0;
  testutil::TempDir dir("tracks");
  save_tracks(t, dir.path() / "tracks.json");
  const TrackGrid u = load_tracks(dir.path() / "tracks.json");
  EXPECT_EQ(u.frames, 2);
  EXPECT_EQ(u.points, t.points);
  EXPECT_EQ(u.visible, t.visible);
}

TEST(Tracks, Frame0MustMatchGrid) {
  TrackGrid t = static_tracks(2, 20, 20, 2, 2);
  t.point(0, 1, 0) += Vec2(0.5, 0);
  EXPECT_THROW(t.validate(), ValueError);
  nlohmann::json doc = tracks_to_json(static_tracks(2, 20, 20, 2, 2));
  doc["points"][0][1][0][0] = 99.0;
  EXPECT_THROW(tracks_from_json(doc), FormatError);
}

TEST(Tracks, SchemaErrors) {
  const nlohmann::json good = tracks_to_json(static_tracks(3, 20, 20, 2, 3));
  auto bad = good;
  bad["format_version"] = 7;
  EXPECT_THROW(tracks_from_json(bad), FormatError);
  bad = good;
  bad.erase("visible");
  EXPECT_THROW(tracks_from_json(bad), FormatError);
  bad = good;
  bad["T"] = 4;
  EXPECT_THROW(tracks_from_json(bad), FormatError);
  bad = good;
  bad["points"][1][0][0][0] = "x";
  EXPECT_THROW(tracks_from_json(bad), FormatError);
  bad = good;
  bad["points"][1][0][0] = {1.0};
  EXPECT_THROW(tracks_from_json(bad), FormatError);
  testutil::TempDir dir("tracks_bad");
  std::ofstream(dir.path() / "t.json") << "{ not json";
  EXPECT_THROW(load_tracks(dir.path() / "t.json"), FormatError);
  EXPECT_THROW(load_tracks(dir.path() / "missing.json"), IoError);
}

TEST(Tracks, VisibleOutOfImageRejected) {
  TrackGrid t = static_tracks(2, 20, 20, 2, 2);
  t.point(1, 0, 0) = Vec2(-3, 5);
  EXPECT_THROW(t.validate(), ValueError);
  t.visible[t.index(1, 0, 0)] = 0;
  EXPECT_NO_THROW(t.validate());
}

TEST(Displacements, StaticIsZero) {
  for (const Image& f : to_displacements(static_tracks(4, 20, 20, 3, 3)))
    for (double v : f.data) EXPECT_EQ(v, 0.0);
}

TEST(Displacements, LinearMotion) {
  TrackGrid t = static_tracks(5, 40, 40, 2, 2);
  for (int f = 0; f < 5; ++f) t.point(f, 0, 0) += Vec2(3.0 * f, 0);
  const auto d = to_displacements(t);
  for (int f = 0; f < 5; ++f) {
    EXPECT_EQ(d[f].at(0, 0, 0), 3.0 * f);
    EXPECT_EQ(d[f].at(0, 0, 1), 0.0);
  }
}

TEST(Displacements, HoldLastVisible) {
  TrackGrid t = static_tracks(4, 40, 40, 2, 2);
  t.point(1, 1, 0) += Vec2(1, 1);
  t.point(2, 1, 0) = Vec2(1000, 1000);
  t.visible[t.index(2, 1, 0)] = 0;
  t.visible[t.index(3, 1, 0)] = 0;
  const auto d = to_displacements(t);
  EXPECT_EQ(d[2].at(1, 0, 0), 1.0);
  EXPECT_EQ(d[2].at(1, 0, 1), 1.0);
  EXPECT_EQ(d[3].at(1, 0, 0), 1.0);
}

TEST(Densify, ConstantPreserved) {
  Image l(4, 5, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 5; ++j) {
      l.at(i, j, 0) = 1.75;
      l.at(i, j, 1) = -0.5;
    }
  const Image d = densify(l, 33, 47);
  for (int r = 0; r < 33; ++r)
    for (int c = 0; c < 47; ++c) {
      EXPECT_EQ(d.at(r, c, 0), 1.75);
      EXPECT_EQ(d.at(r, c, 1), -0.5);
    }
}

TEST(Densify, CentreOfTwoByTwo) {
  Image l(2, 2, 2);
  l.at(0, 0, 0) = 0;
  l.at(0, 1, 0) = 1;
  l.at(1, 0, 0) = 1;
  l.at(1, 1, 0) = 2;
  // Keypoints at 25 and 75 on a 100-pixel axis, centre at pixel 50.
  const Image d = densify(l, 100, 100);
  EXPECT_NEAR(d.at(50, 50, 0), 1.0, 1e-15);
  EXPECT_NEAR(sample_lattice(l, 50, 50, 100, 100).x(), 1.0, 1e-15);
}

TEST(Densify, ReproducesLatticeAtKeypoints) {
  std::mt19937_64 rng(6);
  for (auto [H, W, hg, wg] : {std::tuple{64, 64, 16, 16}, {40, 60, 5, 6}, {16, 16, 16, 16}, {9, 7, 3, 7}}) {
    const Image l = random_lattice(hg, wg, rng);
    const KeypointGrid g = sample_grid(H, W, hg, wg);
    for (int i = 0; i < hg; ++i)
      for (int j = 0; j < wg; ++j) {
        const Vec2 v = sample_lattice(l, g.at(i, j).x(), g.at(i, j).y(), H, W);
        EXPECT_NEAR(v.x(), l.at(i, j, 0), 1e-9);
        EXPECT_NEAR(v.y(), l.at(i, j, 1), 1e-9);
      }
  }
  // When the cell centres are integer pixels the dense image itself reproduces them.
  const Image l = random_lattice(16, 16, rng);
  const Image d = densify(l, 64, 64);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) EXPECT_NEAR(d.at(4 * i + 2, 4 * j + 2, 0), l.at(i, j, 0), 1e-9);
}

TEST(Densify, MatchesBruteForceOracle) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> gsz(2, 9), isz(2, 40);
  for (int trial = 0; trial < 50; ++trial) {
    const int hg = gsz(rng), wg = gsz(rng);
    const int H = std::max(hg, isz(rng)), W = std::max(wg, isz(rng));
    const Image l = random_lattice(hg, wg, rng);
    const Image a = densify(l, H, W);
    const Image b = oracle::densify(l, H, W);
    for (std::size_t k = 0; k < a.data.size(); ++k) ASSERT_NEAR(a.data[k], b.data[k], 1e-12) << trial;
  }
}

TEST(Densify, Linearity) {
  std::mt19937_64 rng(13);
  const Image f1 = random_lattice(5, 7, rng), f2 = random_lattice(5, 7, rng);
  const double a = 0.7, b = -2.3;
  Image mix(5, 7, 2);
  for (std::size_t k = 0; k < mix.data.size(); ++k) mix.data[k] = a * f1.data[k] + b * f2.data[k];
  const Image d1 = densify(f1, 31, 29), d2 = densify(f2, 31, 29), dm = densify(mix, 31, 29);
  for (std::size_t k = 0; k < dm.data.size(); ++k) EXPECT_NEAR(dm.data[k], a * d1.data[k] + b * d2.data[k], 1e-12);
}

TEST(Densify, ConvexCombinationBounds) {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const Image l = random_lattice(4, 6, rng);
    const Image d = densify(l, 37, 23);
    for (int ch = 0; ch < 2; ++ch) {
      double lo = 1e300, hi = -1e300;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) {
          lo = std::min(lo, l.at(i, j, ch));
          hi = std::max(hi, l.at(i, j, ch));
        }
      for (int r = 0; r < 37; ++r)
        for (int c = 0; c < 23; ++c) {
          EXPECT_GE(d.at(r, c, ch), lo - 1e-12);
          EXPECT_LE(d.at(r, c, ch), hi + 1e-12);
        }
    }
  }
}

TEST(Densify, TemporallyConstantInputIsBitIdentical) {
  std::mt19937_64 rng(15);
  const Image l = random_lattice(6, 6, rng);
  const auto frames = densify_all({l, l, l, l}, 50, 45);
  ASSERT_EQ(frames.size(), 4u);
  for (std::size_t f = 1; f < frames.size(); ++f) EXPECT_EQ(frames[f].data, frames[0].data);
  EXPECT_EQ(frames[0].data, densify(l, 50, 45).data);
}

TEST(SampleField, LatticeMidpointAndClamp) {
  std::mt19937_64 rng(16);
  Image f(5, 6, 2);
  std::uniform_real_distribution<double> u(-1, 1);
  for (double& v : f.data) v = u(rng);
  const Vec2 at = sample_field(f, 3, 2);
  EXPECT_EQ(at.x(), f.at(2, 3, 0));
  EXPECT_EQ(at.y(), f.at(2, 3, 1));
  const Vec2 mid = sample_field(f, 3.5, 2);
  EXPECT_NEAR(mid.x(), 0.5 * (f.at(2, 3, 0) + f.at(2, 4, 0)), 1e-15);
  const Vec2 far = sample_field(f, 1e6, -1e6);
  EXPECT_EQ(far.x(), f.at(0, 5, 0));
  EXPECT_EQ(far.y(), f.at(0, 5, 1));
}
