#include "tissuedef/spatial_index.hpp"

#include <algorithm>
#include <limits>

#include "tissuedef/error.hpp"

namespace tissuedef {

SpatialIndex::SpatialIndex(std::vector<Vec3> points, std::size_t leaf_size)
    : points_(std::move(points)), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  if (points_.empty()) throw ValueError("spatial index: empty point set");
  for (const auto& p : points_)
    if (!p.allFinite()) throw ValueError("spatial index: non-finite point");
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
  build(0, order_.size());
}

std::size_t SpatialIndex::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end});
  if (end - begin <= leaf_size_) return id;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  Node& n = nodes_[id];
  n.axis = axis;
  n.split = split;
  n.left = left;
  n.right = right;
  return id;
}

void SpatialIndex::search(std::size_t id, const Vec3& q, Hit& best) const {
  const Node& n = nodes_[id];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d = (points_[idx] - q).squaredNorm();
      if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) best = {idx, d};
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[n.axis] - n.split;
  const std::size_t near = diff < 0 ? n.left : n.right;
  const std::size_t far = diff < 0 ? n.right : n.left;
  search(near, q, best);
  // Equal distances must still be visited for the lowest-index rule.
  if (diff * diff <= best.squared_distance) search(far, q, best);
}

SpatialIndex::Hit SpatialIndex::nearest(const Vec3& q) const {
  Hit best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  search(0, q, best);
  return best;
}

SpatialIndex build_index(std::span<const Vec3> positions) {
  return SpatialIndex(std::vector<Vec3>(positions.begin(), positions.end()));
}

}  // namespace tissuedef
