#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "tissuedef/error.hpp"
#include "tissuedef/visualize.hpp"

using namespace tissuedef;

namespace {

Image grid_positions(int H, int W) {
  Image p(H, W, 3);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      p.at(r, c, 0) = c;
      p.at(r, c, 1) = r;
      p.at(r, c, 2) = 0.1 * (r + c);
    }
  return p;
}

}  // namespace

TEST(Flatten, FullMaskRowMajor) {
  const Image pos = grid_positions(2, 2);
  Image vec(2, 2, 3);
  for (std::size_t k = 0; k < vec.data.size(); ++k) vec.data[k] = static_cast<double>(k);
  const FlatField f = flatten_field(pos, vec, Mask(2, 2, true));
  ASSERT_EQ(f.positions.size(), 4u);
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) {
      const std::size_t i = r * 2 + c;
      EXPECT_EQ(f.source[i], i);
      EXPECT_EQ(f.positions[i], Vec3(c, r, 0.1 * (r + c)));
      EXPECT_EQ(f.vectors[i], Vec3(vec.at(r, c, 0), vec.at(r, c, 1), vec.at(r, c, 2)));
    }
}

TEST(Flatten, MaskSelectsAndPreservesOrder) {
  const Image pos = grid_positions(5, 7);
  const Image vec = grid_positions(5, 7);
  EXPECT_TRUE(flatten_field(pos, vec, Mask(5, 7, false)).positions.empty());
  Mask m(5, 7, false);
  m.set(4, 1, true);
  m.set(0, 6, true);
  m.set(2, 3, true);
  const FlatField f = flatten_field(pos, vec, m);
  EXPECT_EQ(f.source, (std::vector<std::size_t>{6, 17, 29}));
  for (std::size_t i = 0; i < f.source.size(); ++i) {
    const int r = static_cast<int>(f.source[i] / 7), c = static_cast<int>(f.source[i] % 7);
    EXPECT_EQ(f.positions[i], Vec3(c, r, 0.1 * (r + c)));
  }
  EXPECT_THROW(flatten_field(pos, Image(5, 6, 3), m), ShapeError);
  EXPECT_THROW(flatten_field(pos, Image(5, 7, 2), m), ShapeError);
}

TEST(ColorMapTest, StopsAndInterpolation) {
  const ColorMap c = ColorMap::blue_white_red();
  EXPECT_EQ(c(0.0), Vec3(0, 0, 1));
  EXPECT_EQ(c(0.5), Vec3(1, 1, 1));
  EXPECT_EQ(c(1.0), Vec3(1, 0, 0));
  EXPECT_LT((c(0.25) - Vec3(0.5, 0.5, 1)).norm(), 1e-15);
  EXPECT_EQ(c(-3.0), c(0.0));
  EXPECT_EQ(c(7.0), c(1.0));
  ColorMap bad{{{0.0, Vec3::Zero()}, {0.9, Vec3::Ones()}}};
  EXPECT_THROW(bad.validate(), ValueError);
  bad = {{{0.0, Vec3::Zero()}, {0.6, Vec3::Ones()}, {0.4, Vec3::Ones()}, {1.0, Vec3::Ones()}}};
  EXPECT_THROW(bad.validate(), ValueError);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_EQ(percentile({3.0}, 99.0), 3.0);
  EXPECT_EQ(percentile({4, 1, 3, 2, 5}, 50.0), 3.0);
  EXPECT_NEAR(percentile({0, 10}, 99.0), 9.9, 1e-12);
  EXPECT_EQ(percentile({0, 10}, 100.0), 10.0);
  EXPECT_THROW(percentile({}, 50.0), ValueError);
  EXPECT_THROW(percentile({1.0}, 101.0), ValueError);
}

TEST(Colorize, AllZeroVectors) {
  TriangleMesh m;
  m.vertices = {Vec3(0.2, 0.1, 0), Vec3(3, 3, 0), Vec3(1, 4, 0)};
  m.triangles = {{0, 1, 2}};
  const Image pos = grid_positions(5, 5);
  const FlatField f = flatten_field(pos, Image(5, 5, 3), Mask(5, 5, true));
  const SpatialIndex idx = build_index(f.positions);
  const ColorMap cmap = ColorMap::blue_white_red();
  const TriangleMesh c = colorize(m, idx, f.vectors, cmap);
  for (const Vec3& col : c.colors) EXPECT_EQ(col, cmap(0.0));
  EXPECT_EQ(c.triangles, m.triangles);
}

TEST(Colorize, VertexOnGridPointUsesThatVector) {
  const Image pos = grid_positions(4, 4);
  Image vec(4, 4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) vec.at(r, c, 0) = r * 4 + c;  // magnitudes 0..15
  const FlatField f = flatten_field(pos, vec, Mask(4, 4, true));
  const SpatialIndex idx = build_index(f.positions);
  TriangleMesh m;
  m.vertices = {f.positions[5], f.positions[10], f.positions[15]};
  m.triangles = {{0, 1, 2}};
  const ColorMap cmap = ColorMap::blue_white_red();
  const TriangleMesh c = colorize(m, idx, f.vectors, cmap);
  const double d_max = percentile(std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, 99.0);
  EXPECT_EQ(c.colors[0], cmap(5 / d_max));
  EXPECT_EQ(c.colors[1], cmap(10 / d_max));
  EXPECT_EQ(c.colors[2], cmap(1.0));
}

TEST(Colorize, TwoClustersGiveTwoColors) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0, 0.1);
  std::vector<Vec3> pts, vecs;
  for (int i = 0; i < 200; ++i) {
    const bool right = i % 2;
    pts.emplace_back((right ? 5 : -5) + n(rng), n(rng), n(rng));
    vecs.push_back(right ? Vec3(0, 0.7, 0) : Vec3::Zero());
  }
  const SpatialIndex idx = build_index(pts);
  TriangleMesh m;
  for (int i = 0; i < 60; ++i) m.vertices.emplace_back((i % 2 ? 4.5 : -4.5) + n(rng), n(rng), n(rng));
  const ColorMap cmap = ColorMap::blue_white_red();
  const TriangleMesh c = colorize(m, idx, vecs, cmap);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(c.colors[i], m.vertices[i].x() > 0 ? cmap(1.0) : cmap(0.0));
}

TEST(Colorize, PermutationInvariant) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> pts, vecs;
  for (int i = 0; i < 300; ++i) {
    pts.emplace_back(u(rng), u(rng), u(rng));
    vecs.emplace_back(u(rng), u(rng), u(rng));
  }
  TriangleMesh m;
  for (int i = 0; i < 100; ++i) m.vertices.emplace_back(u(rng), u(rng), u(rng));
  const ColorMap cmap = ColorMap::blue_white_red();
  const TriangleMesh a = colorize(m, build_index(pts), vecs, cmap);
  std::vector<std::size_t> perm(pts.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Vec3> p2, v2;
  for (std::size_t i : perm) {
    p2.push_back(pts[i]);
    v2.push_back(vecs[i]);
  }
  const TriangleMesh b = colorize(m, build_index(p2), v2, cmap);
  EXPECT_EQ(a.colors, b.colors);
  EXPECT_THROW(colorize(m, build_index(pts), std::vector<Vec3>(3), cmap), ShapeError);
}

TEST(Heatmap, MagnitudeNormalisation) {
  Image d(3, 4, 2);
  d.at(1, 2, 0) = 3;
  d.at(1, 2, 1) = 4;
  d.at(0, 0, 0) = 100;  // outside the mask
  Mask m(3, 4, true);
  m.set(0, 0, false);
  const ColorMap cmap = ColorMap::blue_white_red();
  const Image h = displacement_heatmap(d, &m, cmap);
  ASSERT_EQ(h.channels, 3);
  ASSERT_EQ(h.height, 3);
  ASSERT_EQ(h.width, 4);
  // 11 masked magnitudes, ten zeros and a 5: the 99th percentile is 4.5.
  const Vec3 peak = cmap(5.0 / 4.5);
  EXPECT_EQ(Vec3(h.at(1, 2, 0), h.at(1, 2, 1), h.at(1, 2, 2)), peak);
  EXPECT_EQ(Vec3(h.at(2, 3, 0), h.at(2, 3, 1), h.at(2, 3, 2)), cmap(0.0));
  const Image zero = displacement_heatmap(Image(3, 4, 2), nullptr, cmap);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_EQ(Vec3(zero.at(r, c, 0), zero.at(r, c, 1), zero.at(r, c, 2)), cmap(0.0));
  EXPECT_THROW(displacement_heatmap(Image(3, 4, 1), nullptr, cmap), ShapeError);
}
