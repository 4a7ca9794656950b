#include "tissuedef/visualize.hpp"

#include <algorithm>
#include <cmath>

#include "tissuedef/error.hpp"

namespace tissuedef {

FlatField flatten_field(const Image& positions, const Image& vectors, const Mask& mask) {
  if (!positions.same_size(vectors) || positions.height != mask.height || positions.width != mask.width ||
      positions.channels != 3 || vectors.channels != 3) {
    throw ShapeError("flatten_field: grids must be H x W x 3 with a matching H x W mask");
  }
  FlatField out;
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      out.positions.emplace_back(positions.at(r, c, 0), positions.at(r, c, 1), positions.at(r, c, 2));
      out.vectors.emplace_back(vectors.at(r, c, 0), vectors.at(r, c, 1), vectors.at(r, c, 2));
      out.source.push_back(static_cast<std::size_t>(r) * mask.width + c);
    }
  }
  return out;
}

ColorMap ColorMap::blue_white_red() {
  return {{{0.0, Vec3(0, 0, 1)}, {0.5, Vec3(1, 1, 1)}, {1.0, Vec3(1, 0, 0)}}};
}

void ColorMap::validate() const {
  if (stops.size() < 2 || stops.front().first != 0.0 || stops.back().first != 1.0) {
    throw ValueError("colormap: stops must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < stops.size(); ++i)
    if (!(stops[i].first > stops[i - 1].first)) throw ValueError("colormap: stop positions must increase");
  for (const auto& s : stops)
    if ((s.second.array() < 0).any() || (s.second.array() > 1).any()) throw ValueError("colormap: colors must be in [0,1]");
}

Vec3 ColorMap::operator()(double s) const {
  s = std::clamp(s, 0.0, 1.0);
  for (std::size_t i = 1; i < stops.size(); ++i) {
    if (s <= stops[i].first) {
      const auto& [a, ca] = stops[i - 1];
      const auto& [b, cb] = stops[i];
      const double w = (s - a) / (b - a);
      return ca + w * (cb - ca);
    }
  }
  return stops.back().second;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValueError("percentile of an empty set");
  if (!(q >= 0.0 && q <= 100.0)) throw ValueError("percentile: q must lie in [0,100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * (values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

TriangleMesh colorize(const TriangleMesh& mesh, const SpatialIndex& index, std::span<const Vec3> vectors,
                      const ColorMap& cmap) {
  cmap.validate();
  if (vectors.size() != index.size()) throw ShapeError("colorize: need one vector per indexed position");
  std::vector<double> mags(vectors.size());
  for (std::size_t i = 0; i < vectors.size(); ++i) mags[i] = vectors[i].norm();
  const double d_max = percentile(mags, 99.0);
  TriangleMesh out = mesh;
  out.colors.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const double m = mags[index.nearest(mesh.vertices[v]).index];
    out.colors[v] = cmap(d_max > 0.0 ? std::min(1.0, m / d_max) : 0.0);
  }
  return out;
}

Image displacement_heatmap(const Image& displacement, const Mask* mask, const ColorMap& cmap) {
  cmap.validate();
  if (displacement.channels < 2) throw ShapeError("heatmap: displacement needs at least 2 channels");
  if (mask && (mask->height != displacement.height || mask->width != displacement.width)) {
    throw ShapeError("heatmap: mask size differs from the field");
  }
  const int H = displacement.height, W = displacement.width;
  std::vector<double> mags(static_cast<std::size_t>(H) * W);
  std::vector<double> selected;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double m = std::hypot(displacement.at(r, c, 0), displacement.at(r, c, 1));
      mags[static_cast<std::size_t>(r) * W + c] = m;
      if (!mask || mask->at(r, c)) selected.push_back(m);
    }
  }
  const double d_max = selected.empty() ? 0.0 : percentile(selected, 99.0);
  Image out(H, W, 3);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const double m = mags[static_cast<std::size_t>(r) * W + c];
      const Vec3 col = cmap(d_max > 0.0 ? m / d_max : 0.0);
      for (int k = 0; k < 3; ++k) out.at(r, c, k) = col[k];
    }
  }
  return out;
}

}  // namespace tissuedef
