#include "tissuedef/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "tissuedef/error.hpp"

namespace tissuedef {

namespace {

const Vec3 kToolColor(0.55, 0.55, 0.6);
const Vec3 kTissueColor(0.72, 0.42, 0.38);

}  // namespace

BumpScene::BumpScene(BumpSceneConfig config, double texture_phase_x, double texture_phase_y)
    : config_(config), phase_x_(texture_phase_x), phase_y_(texture_phase_y) {}

BumpScene make_bump_scene(const BumpSceneConfig& config) {
  if (!(config.sigma > 0.0)) throw ValueError("bump scene: sigma must be positive");
  if (!(config.amplitude >= 0.0)) throw ValueError("bump scene: amplitude must be non-negative");
  if (config.frames < 2) throw ValueError("bump scene: need at least 2 frames");
  if (!(config.base_depth > 0.0) || !(config.amplitude < config.base_depth)) {
    throw ValueError("bump scene: need 0 <= A < z0");
  }
  if (!(config.checker_size > 0.0)) throw ValueError("bump scene: checker size must be positive");
  if (config.border < 0) throw ValueError("bump scene: border must be non-negative");
  std::mt19937_64 rng(config.texture_seed);
  std::uniform_real_distribution<double> phase(0.0, config.checker_size);
  const double px = phase(rng);
  const double py = phase(rng);
  return BumpScene(config, px, py);
}

double BumpScene::amplitude_at(double t) const { return config_.amplitude * std::sin(std::numbers::pi * t); }

double BumpScene::bump(double x, double y) const {
  const double dx = x - config_.center_x, dy = y - config_.center_y;
  return std::exp(-(dx * dx + dy * dy) / (config_.sigma * config_.sigma));
}

Vec3 BumpScene::surface(double x, double y, double t) const {
  return {x, y, config_.base_depth - amplitude_at(t) * bump(x, y)};
}

Vec3 BumpScene::albedo(double x, double y) const {
  // Smoothed checker: tanh-sharpened sinusoids give soft cell edges.
  const double k = std::numbers::pi / config_.checker_size;
  const double sx = std::tanh(3.0 * std::sin(k * (x + phase_x_)));
  const double sy = std::tanh(3.0 * std::sin(k * (y + phase_y_)));
  const double c = config_.checker_contrast * sx * sy;
  return kTissueColor + Vec3(c, 0.8 * c, 0.6 * c);
}

double BumpScene::ray_depth(double u, double v, double t, const Intrinsics& intr) const {
  const double a = (u - intr.cx) / intr.fx;
  const double b = (v - intr.cy) / intr.fy;
  const double amp = amplitude_at(t);
  double z = config_.base_depth;
  if (amp == 0.0) return z;
  // Newton on f(z) = z - z0 + amp * G(z a, z b).
  for (int it = 0; it < 100; ++it) {
    const double x = z * a, y = z * b;
    const double g = bump(x, y);
    const double dgdz = g * (-2.0 / (config_.sigma * config_.sigma)) *
                        ((x - config_.center_x) * a + (y - config_.center_y) * b);
    const double f = z - config_.base_depth + amp * g;
    const double step = f / (1.0 + amp * dgdz);
    z -= step;
    if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(z))) break;
  }
  return z;
}

std::optional<PixelRect> BumpScene::occluder(int frame, const Intrinsics& intr) const {
  if (!config_.occluder) return std::nullopt;
  const int w = std::max(1, intr.width / 6);
  const int h = std::max(1, intr.height / 3);
  const int left = static_cast<int>(std::lround(static_cast<double>(frame) * (intr.width - w) / (config_.frames - 1)));
  const int top = intr.height / 3;
  return PixelRect{left, top, left + w, top + h};
}

Intrinsics default_synthetic_intrinsics(int height, int width) {
  Intrinsics intr;
  intr.fx = width;
  intr.fy = width;
  intr.cx = (width - 1) / 2.0;
  intr.cy = (height - 1) / 2.0;
  intr.width = width;
  intr.height = height;
  return intr;
}

SyntheticSequence render_synthetic_frames(const BumpScene& scene, const Intrinsics& intr) {
  intr.validate();
  const auto& cfg = scene.config();
  const int H = intr.height, W = intr.width;
  SyntheticSequence seq;
  for (int f = 0; f < cfg.frames; ++f) {
    const double t = scene.frame_time(f);
    FrameSample frame;
    frame.image = Image(H, W, 3);
    frame.depth = Image(H, W, 1);
    frame.mask = Mask(H, W, true);
    frame.pose = Pose::identity();
    frame.time = t;
    Image exact(H, W, 1);
    const auto rect = scene.occluder(f, intr);
    for (int r = 0; r < H; ++r) {
      for (int c = 0; c < W; ++c) {
        const double z = scene.ray_depth(c, r, t, intr);
        exact.at(r, c) = z;
        const Vec3 p = backproject(c, r, z, intr);
        const bool border = r < cfg.border || c < cfg.border || r >= H - cfg.border || c >= W - cfg.border;
        const bool tool = rect && rect->contains(c, r);
        const Vec3 color = tool ? kToolColor : scene.albedo(p.x(), p.y());
        for (int k = 0; k < 3; ++k) frame.image.at(r, c, k) = color[k];
        frame.depth.at(r, c) = tool ? 0.0 : z;
        frame.mask.set(r, c, !(tool || border));
      }
    }
    seq.truth.depth.push_back(std::move(exact));
    seq.truth.deformation.push_back(gt_deformation(scene, t, intr));
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

TrackGrid oracle_tracks(const BumpScene& scene, const KeypointGrid& grid, const Intrinsics& intr,
                        const std::vector<Pose>& poses) {
  const auto& cfg = scene.config();
  if (static_cast<int>(poses.size()) != cfg.frames) throw ValueError("oracle_tracks: need one pose per frame");
  TrackGrid tr;
  tr.frames = cfg.frames;
  tr.grid_height = grid.grid_height;
  tr.grid_width = grid.grid_width;
  tr.image_height = grid.image_height;
  tr.image_width = grid.image_width;
  for (int f = 0; f < cfg.frames; ++f) {
    const double t = scene.frame_time(f);
    const auto rect = scene.occluder(f, intr);
    for (int i = 0; i < grid.grid_height; ++i) {
      for (int j = 0; j < grid.grid_width; ++j) {
        const Vec2& px = grid.at(i, j);
        if (f == 0) {
          tr.points.push_back(px);
          tr.visible.push_back(rect && rect->contains(px.x(), px.y()) ? 0 : 1);
          continue;
        }
        const double z0 = scene.ray_depth(px.x(), px.y(), 0.0, intr);
        const Vec3 material = poses[0].apply(backproject(px.x(), px.y(), z0, intr));
        const Vec3 world = scene.surface(material.x(), material.y(), t);
        const Vec2 uv = project(poses[f].apply_inverse(world), intr);
        const bool inside = uv.x() >= -0.5 && uv.y() >= -0.5 && uv.x() <= intr.width - 0.5 &&
                            uv.y() <= intr.height - 0.5;
        const bool occluded = rect && rect->contains(uv.x(), uv.y());
        tr.points.push_back(uv);
        tr.visible.push_back(inside && !occluded ? 1 : 0);
      }
    }
  }
  return tr;
}

Image gt_deformation(const BumpScene& scene, double t, const Intrinsics& intr) {
  Image out(intr.height, intr.width, 3);
  for (int r = 0; r < intr.height; ++r) {
    for (int c = 0; c < intr.width; ++c) {
      const double z0 = scene.ray_depth(c, r, 0.0, intr);
      const Vec3 p0 = backproject(c, r, z0, intr);
      const Vec3 pt = scene.surface(p0.x(), p0.y(), t);
      const Vec3 p0s = scene.surface(p0.x(), p0.y(), 0.0);
      const Vec3 d = pt - p0s;
      for (int k = 0; k < 3; ++k) out.at(r, c, k) = d[k];
    }
  }
  return out;
}

}  // namespace tissuedef
