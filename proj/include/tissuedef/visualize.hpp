#pragma once

#include <span>
#include <utility>
#include <vector>

#include "tissuedef/image.hpp"
#include "tissuedef/mesh.hpp"
#include "tissuedef/spatial_index.hpp"

namespace tissuedef {

/// Mask-true grid cells in row-major order; `source[i]` is the flat index r*W + c.
struct FlatField {
  std::vector<Vec3> positions;
  std::vector<Vec3> vectors;
  std::vector<std::size_t> source;
};

FlatField flatten_field(const Image& positions, const Image& vectors, const Mask& mask);

/// Piecewise-linear colormap over [0,1].
struct ColorMap {
  std::vector<std::pair<double, Vec3>> stops;

  static ColorMap blue_white_red();
  void validate() const;
  /// Values outside [0,1] clamp.
  Vec3 operator()(double s) const;
};

/// q-th percentile (q in [0,100]) with linear interpolation between order statistics.
double percentile(std::vector<double> values, double q);

/// Colors each vertex by the magnitude of the vector paired with its nearest
/// indexed position, divided by the 99th-percentile magnitude and clamped to [0,1].
TriangleMesh colorize(const TriangleMesh& mesh, const SpatialIndex& index, std::span<const Vec3> vectors,
                      const ColorMap& cmap);

/// RGB image of per-pixel displacement magnitude (first two channels),
/// normalised by the 99th percentile over mask-true pixels (all pixels when `mask` is null).
Image displacement_heatmap(const Image& displacement, const Mask* mask, const ColorMap& cmap);

}  // namespace tissuedef
