#include <cmath>
#include <unordered_map>

#include "marching_cubes_tables.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/mesh.hpp"
#include "tissuedef/renderer.hpp"

namespace tissuedef {

namespace {

// Corner offsets and edge endpoints in the table's numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

}  // namespace

void TriangleMesh::validate() const {
  const int nv = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int i : t)
      if (i < 0 || i >= nv) throw ValueError("mesh: triangle index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw ValueError("mesh: degenerate triangle");
  }
  if (!colors.empty() && colors.size() != vertices.size()) throw ValueError("mesh: need one color per vertex");
}

TriangleMesh marching_cubes(const SdfBatchFunction& field, const Box& bounds, int n, double iso) {
  if (n < 8) throw ValueError("marching_cubes: resolution must be >= 8");
  if (!((bounds.max.array() > bounds.min.array()).all())) throw ValueError("marching_cubes: empty bounds");
  const Vec3 step = (bounds.max - bounds.min) / (n - 1);
  const std::size_t N = n;
  auto lin = [N](std::size_t i, std::size_t j, std::size_t k) { return (k * N + j) * N + i; };
  auto position = [&](std::size_t i, std::size_t j, std::size_t k) {
    return Vec3(bounds.min.x() + i * step.x(), bounds.min.y() + j * step.y(), bounds.min.z() + k * step.z());
  };

  std::vector<Vec3> lattice(N * N * N);
  for (std::size_t k = 0; k < N; ++k)
    for (std::size_t j = 0; j < N; ++j)
      for (std::size_t i = 0; i < N; ++i) lattice[lin(i, j, k)] = position(i, j, k);
  const std::vector<double> values = field(lattice);
  if (values.size() != lattice.size()) throw ShapeError("marching_cubes: field returned the wrong number of values");

  TriangleMesh mesh;
  std::unordered_map<std::size_t, int> edge_vertex;  // lattice index * 3 + axis
  auto vertex_on = [&](std::size_t a, std::size_t b) {
    if (b < a) std::swap(a, b);
    const std::size_t d = b - a;
    const std::size_t axis = d == 1 ? 0 : (d == N ? 1 : 2);
    const std::size_t key = a * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = values[a], vb = values[b];
    const double t = (iso - va) / (vb - va);
    mesh.vertices.push_back(lattice[a] + t * (lattice[b] - lattice[a]));
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };

  for (std::size_t k = 0; k + 1 < N; ++k) {
    for (std::size_t j = 0; j + 1 < N; ++j) {
      for (std::size_t i = 0; i + 1 < N; ++i) {
        std::size_t corner[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = lin(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (values[corner[c]] < iso) cube |= 1 << c;
        }
        const auto edges = detail::kEdgeTable[cube];
        if (edges == 0) continue;
        int ids[12];
        for (int e = 0; e < 12; ++e)
          if (edges & (1 << e)) ids[e] = vertex_on(corner[kEdge[e][0]], corner[kEdge[e][1]]);
        const auto& tri = detail::kTriTable[cube];
        for (int t = 0; tri[t] != -1; t += 3) {
          std::array<int, 3> f{ids[tri[t]], ids[tri[t + 1]], ids[tri[t + 2]]};
          mesh.triangles.push_back(f);
        }
      }
    }
  }
  return mesh;
}

TriangleMesh marching_cubes_pointwise(const SdfFunction& field, const Box& bounds, int n, double iso) {
  return marching_cubes(
      [&](std::span<const Vec3> pts) {
        std::vector<double> v;
        v.reserve(pts.size());
        for (const auto& p : pts) v.push_back(field(p));
        return v;
      },
      bounds, n, iso);
}

TriangleMesh deform_mesh(const TriangleMesh& mesh, const FieldBundle& bundle, double time, const Image* dense_field,
                         int iterations) {
  TriangleMesh out = mesh;
  std::vector<Vec3> x = mesh.vertices;
  std::vector<Vec2> p(x.size());
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = conditioning(bundle, dense_field, x[i]);
    const auto d = deform_batch(bundle, x, p, time);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mesh.vertices[i] - d[i];
  }
  out.vertices = std::move(x);
  return out;
}

}  // namespace tissuedef
