#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tissuedef/camera.hpp"
#include "tissuedef/tracking.hpp"

namespace tissuedef {

struct BumpSceneConfig {
  double base_depth = 1.0;   ///< z0 of the undeformed plane
  double amplitude = 0.1;    ///< A; peak displacement towards the camera
  double sigma = 0.2;        ///< bump width in surface units
  double center_x = 0.15;    ///< bump centre in surface coordinates
  double center_y = -0.1;
  int frames = 8;
  double checker_size = 0.25;
  double checker_contrast = 0.08;
  std::uint64_t texture_seed = 7;
  bool occluder = true;
  int border = 1;  ///< mask margin in pixels
};

/// Pixel rectangle [col0, col1) x [row0, row1).
struct PixelRect {
  int col0 = 0, row0 = 0, col1 = 0, row1 = 0;
  bool contains(double u, double v) const { return u >= col0 && u < col1 && v >= row0 && v < row1; }
};

/// Textured plane z = z0 - a(t) * exp(-((x-x0)^2 + (y-y0)^2) / sigma^2) viewed
/// by a static camera at the origin, with a(t) = A sin(pi t). Material point
/// (x, y) moves along z only.
class BumpScene {
 public:
  explicit BumpScene(BumpSceneConfig config, double texture_phase_x, double texture_phase_y);

  const BumpSceneConfig& config() const { return config_; }
  double frame_time(int frame) const { return static_cast<double>(frame) / (config_.frames - 1); }
  double amplitude_at(double t) const;
  double bump(double x, double y) const;
  /// World position of material point (x, y) at time t.
  Vec3 surface(double x, double y, double t) const;
  Vec3 albedo(double x, double y) const;
  /// Camera-frame depth of the surface along pixel (u, v) at time t.
  double ray_depth(double u, double v, double t, const Intrinsics& intr) const;
  std::optional<PixelRect> occluder(int frame, const Intrinsics& intr) const;

 private:
  BumpSceneConfig config_;
  double phase_x_, phase_y_;
};

BumpScene make_bump_scene(const BumpSceneConfig& config);

struct GroundTruth {
  std::vector<Image> depth;        ///< exact depth, including occluded pixels
  std::vector<Image> deformation;  ///< H x W x 3 world displacement per reference pixel
};

struct SyntheticSequence {
  std::vector<FrameSample> frames;
  GroundTruth truth;
};

/// Default camera for the synthetic scenes: square pixels, fx = W, centred principal point.
Intrinsics default_synthetic_intrinsics(int height, int width);

SyntheticSequence render_synthetic_frames(const BumpScene& scene, const Intrinsics& intr);

/// Exact tracks of the frame-0 material points under the keypoint grid.
TrackGrid oracle_tracks(const BumpScene& scene, const KeypointGrid& grid, const Intrinsics& intr,
                        const std::vector<Pose>& poses);

/// World displacement of the material point seen at each reference pixel.
Image gt_deformation(const BumpScene& scene, double t, const Intrinsics& intr);

}  // namespace tissuedef
