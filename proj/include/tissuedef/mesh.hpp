#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "tissuedef/camera.hpp"
#include "tissuedef/fields.hpp"
#include "tissuedef/image.hpp"

namespace tissuedef {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> colors;  ///< empty or one rgb in [0,1] per vertex

  bool has_colors() const { return !colors.empty(); }
  void validate() const;
};

struct Box {
  Vec3 min = Vec3::Constant(-1.0);
  Vec3 max = Vec3::Constant(1.0);
};

using SdfFunction = std::function<double(const Vec3&)>;
using SdfBatchFunction = std::function<std::vector<double>(std::span<const Vec3>)>;

/// Zero level set of a field sampled on n x n x n lattice points spanning
/// `bounds` (n - 1 cells per axis), with linear edge interpolation. Vertices
/// on shared lattice edges are shared between triangles.
TriangleMesh marching_cubes(const SdfBatchFunction& field, const Box& bounds, int n, double iso = 0.0);
TriangleMesh marching_cubes_pointwise(const SdfFunction& field, const Box& bounds, int n, double iso = 0.0);

/// Poses the canonical mesh at time t: every vertex x_c is pulled back to the
/// observation point x_o solving x_o + deform(x_o, p_hat(x_o), t) = x_c by
/// ten fixed-point steps x_o <- x_c - deform(x_o, ...). Connectivity is kept.
TriangleMesh deform_mesh(const TriangleMesh& mesh, const FieldBundle& bundle, double time, const Image* dense_field,
                         int iterations = 10);

/// ASCII PLY with float x/y/z, optional uchar red/green/blue, and a
/// uchar/int vertex_indices face list.
void export_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh import_ply(const std::filesystem::path& path);
std::string ply_to_string(const TriangleMesh& mesh);
TriangleMesh ply_from_string(const std::string& text);

}  // namespace tissuedef
