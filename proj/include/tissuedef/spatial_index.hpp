#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tissuedef/camera.hpp"

namespace tissuedef {

/// Static k-d tree over 3D points with median splits along the widest axis.
///
/// `nearest` is exact: it returns the minimum-distance point, and among
/// points at exactly that distance the one with the lowest input index.
/// Queries are const and safe to run concurrently.
class SpatialIndex {
 public:
  struct Hit {
    std::size_t index = 0;
    double squared_distance = 0.0;
  };

  explicit SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size = 8);

  Hit nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

 private:
  struct Node {
    std::size_t begin, end;  // range in order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& q, Hit& best) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// Throws ValueError on an empty point set.
SpatialIndex build_index(std::span<const Vec3> positions);

}  // namespace tissuedef
