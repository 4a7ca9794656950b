#pragma once

#include <Eigen/Core>
#include <array>
#include <span>
#include <vector>

#include "tissuedef/image.hpp"

namespace tissuedef {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole intrinsics in pixels. Pixel (u, v) has its centre at the
/// continuous coordinate (u, v); there is no half-pixel offset.
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const;
};

/// Rigid camera-to-world transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose identity() { return {}; }
  /// From a row-major 4x4 matrix; the last row must be (0, 0, 0, 1).
  static Pose from_row_major(std::span<const double> m);
  std::array<double, 16> to_row_major() const;

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Pose compose(const Pose& rhs) const;
  void validate() const;
};

/// One timestep: RGB in [0,1], metric depth (0 = invalid), foreground mask,
/// camera pose and normalised time in [0,1].
struct FrameSample {
  Image image;
  Image depth;
  Mask mask;
  Pose pose;
  double time = 0.0;

  int height() const { return image.height; }
  int width() const { return image.width; }
  void validate() const;
};

/// Maps world points into the unit sphere: (x - center) * scale.
struct SceneNormalization {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& world) const { return (world - center) * scale; }
  Vec3 invert(const Vec3& normalized) const { return normalized / scale + center; }
};

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

/// ((u-cx)*d/fx, (v-cy)*d/fy, d) in the camera frame.
Vec3 backproject(double u, double v, double depth, const Intrinsics& intr);
/// Inverse of `backproject`; the point must lie in front of the camera.
Vec2 project(const Vec3& camera_point, const Intrinsics& intr);

/// World-frame point for every mask-true pixel with positive depth, in row-major order.
std::vector<Vec3> depth_to_pointcloud(const FrameSample& frame, const Intrinsics& intr);

/// World-frame rays through pixel centres.
std::vector<Ray> pixel_rays(const Intrinsics& intr, const Pose& pose, std::span<const Vec2> pixels);
Ray pixel_ray(const Intrinsics& intr, const Pose& pose, double u, double v);

/// Bounding-box centre and inverse half-diagonal over every point.
SceneNormalization normalize_scene(std::span<const std::vector<Vec3>> clouds);

}  // namespace tissuedef
