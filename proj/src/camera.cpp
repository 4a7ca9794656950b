#include "tissuedef/camera.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "tissuedef/error.hpp"

namespace tissuedef {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ValueError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ValueError("intrinsics: image size must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw ValueError("intrinsics: principal point must lie inside the image");
  }
}

Pose Pose::from_row_major(std::span<const double> m) {
  if (m.size() != 16) throw ValueError("pose needs 16 values, got " + std::to_string(m.size()));
  if (m[12] != 0.0 || m[13] != 0.0 || m[14] != 0.0 || m[15] != 1.0) {
    throw ValueError("pose: last row must be (0, 0, 0, 1)");
  }
  Pose p;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[r * 4 + c];
    p.translation[r] = m[r * 4 + 3];
  }
  p.validate();
  return p;
}

std::array<double, 16> Pose::to_row_major() const {
  std::array<double, 16> m{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m[r * 4 + c] = rotation(r, c);
    m[r * 4 + 3] = translation[r];
  }
  m[15] = 1.0;
  return m;
}

Pose Pose::compose(const Pose& rhs) const {
  Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

void Pose::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw ValueError("pose contains non-finite values");
  if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ValueError("pose rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) throw ValueError("pose rotation must have determinant +1");
}

void FrameSample::validate() const {
  if (image.channels != 3) throw ValueError("frame image must have 3 channels");
  if (depth.channels != 1 || !depth.same_size(image)) throw ValueError("frame depth must be HxW single-channel");
  if (mask.height != image.height || mask.width != image.width) throw ValueError("frame mask must be HxW");
  if (!(time >= 0.0 && time <= 1.0)) throw ValueError("frame time must lie in [0,1]");
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c) {
      const double d = depth.at(r, c);
      if (!std::isfinite(d) || d < 0.0) throw ValueError("frame depth must be finite and non-negative");
      if (mask.at(r, c) && d <= 0.0) {
        throw ValueError("foreground pixel (" + std::to_string(c) + ", " + std::to_string(r) + ") has no depth");
      }
    }
  }
  pose.validate();
}

Vec3 backproject(double u, double v, double depth, const Intrinsics& intr) {
  if (!(depth > 0.0)) throw ValueError("backproject: depth must be positive");
  if (u < 0.0 || v < 0.0 || u > intr.width - 1 || v > intr.height - 1) {
    throw ValueError("backproject: pixel outside the image");
  }
  return {(u - intr.cx) * depth / intr.fx, (v - intr.cy) * depth / intr.fy, depth};
}

Vec2 project(const Vec3& p, const Intrinsics& intr) {
  if (!(p.z() > 0.0)) throw ValueError("project: point is not in front of the camera");
  return {intr.fx * p.x() / p.z() + intr.cx, intr.fy * p.y() / p.z() + intr.cy};
}

std::vector<Vec3> depth_to_pointcloud(const FrameSample& frame, const Intrinsics& intr) {
  frame.pose.validate();
  std::vector<Vec3> out;
  for (int r = 0; r < frame.depth.height; ++r) {
    for (int c = 0; c < frame.depth.width; ++c) {
      const double d = frame.depth.at(r, c);
      if (!frame.mask.at(r, c) || !(d > 0.0)) continue;
      out.push_back(frame.pose.apply(backproject(c, r, d, intr)));
    }
  }
  return out;
}

Ray pixel_ray(const Intrinsics& intr, const Pose& pose, double u, double v) {
  const Vec3 dir_cam((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
  return {pose.translation, (pose.rotation * dir_cam).normalized()};
}

std::vector<Ray> pixel_rays(const Intrinsics& intr, const Pose& pose, std::span<const Vec2> pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const Vec2& px : pixels) {
    if (px.x() < 0.0 || px.y() < 0.0 || px.x() > intr.width - 1 || px.y() > intr.height - 1) {
      throw ValueError("pixel_rays: pixel outside the image");
    }
    rays.push_back(pixel_ray(intr, pose, px.x(), px.y()));
  }
  return rays;
}

SceneNormalization normalize_scene(std::span<const std::vector<Vec3>> clouds) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  std::size_t count = 0;
  for (const auto& cloud : clouds) {
    for (const Vec3& p : cloud) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
      ++count;
    }
  }
  if (count == 0) throw ValueError("normalize_scene: every point cloud is empty");
  SceneNormalization n;
  n.center = 0.5 * (lo + hi);
  const double half_diag = 0.5 * (hi - lo).norm();
  // The (1 - 1e-12) factor keeps bounding-box corners inside the unit sphere under rounding.
  n.scale = half_diag > 0.0 ? (1.0 - 1e-12) / half_diag : 1.0;
  return n;
}

}  // namespace tissuedef
