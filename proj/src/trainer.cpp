#include "tissuedef/trainer.hpp"

#include <cmath>
#include <cstdio>

#include "tissuedef/error.hpp"
#include "tissuedef/tracking.hpp"

namespace tissuedef {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigError("train." + field + ": " + why); };
  if (iterations < 1) fail("iterations", "must be >= 1");
  if (rays_per_batch < 1) fail("rays_per_batch", "must be >= 1");
  if (samples_per_ray < 2) fail("samples_per_ray", "must be >= 2");
  if (!auto_bounds && !(near >= 0.0 && near < far)) fail("near", "need 0 <= near < far");
  if (!(bounds_margin >= 0.0)) fail("bounds_margin", "must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay", "must lie in (0, 1]");
  if (optimizer != "adam" && optimizer != "sgd") fail("optimizer", "must be \"adam\" or \"sgd\"");
  if (!(weights.color >= 0)) fail("weights.color", "must be >= 0");
  if (!(weights.depth >= 0)) fail("weights.depth", "must be >= 0");
  if (!(weights.eikonal >= 0)) fail("weights.eikonal", "must be >= 0");
  if (!(weights.sdf_depth >= 0)) fail("weights.sdf_depth", "must be >= 0");
  if (eikonal_points < 0) fail("eikonal_points", "must be >= 0");
  if (!(p_clear >= 0.0 && p_clear <= 1.0)) fail("p_clear", "must lie in [0, 1]");
  if (holdout_period < 2) fail("holdout_period", "must be >= 2");
  if (holdout_offset < 0 || holdout_offset >= holdout_period) fail("holdout_offset", "must lie in [0, holdout_period)");
}

std::vector<int> training_frames(int frame_count, const TrainConfig& c) {
  std::vector<int> out;
  for (int i = 0; i < frame_count; ++i)
    if (i % c.holdout_period != c.holdout_offset) out.push_back(i);
  return out;
}

std::vector<int> heldout_frames(int frame_count, const TrainConfig& c) {
  std::vector<int> out;
  for (int i = 0; i < frame_count; ++i)
    if (i % c.holdout_period == c.holdout_offset) out.push_back(i);
  return out;
}

SceneCalibration calibrate_scene(const Scene& scene) {
  if (scene.frames.empty()) throw ValueError("calibrate_scene: no frames");
  std::vector<std::vector<Vec3>> clouds;
  for (const auto& f : scene.frames) clouds.push_back(depth_to_pointcloud(f, scene.intrinsics));
  SceneCalibration cal;
  cal.intrinsics = scene.intrinsics;
  cal.reference_pose = scene.frames[0].pose;
  cal.normalization = normalize_scene(clouds);
  return cal;
}

std::vector<std::uint8_t> ablation_mask(std::size_t count, double p_clear, std::mt19937_64& rng) {
  if (!(p_clear >= 0.0 && p_clear <= 1.0)) throw ValueError("ablation: p_clear must lie in [0, 1]");
  std::vector<std::uint8_t> out(count, 0);
  if (p_clear == 0.0) return out;
  for (auto& m : out) m = static_cast<double>(rng() >> 11) * 0x1.0p-53 < p_clear ? 1 : 0;
  return out;
}

std::vector<Vec3> ablate_reference(std::span<const Vec3> points, double p_clear, std::mt19937_64& rng) {
  const auto mask = ablation_mask(points.size(), p_clear, rng);
  std::vector<Vec3> out(points.begin(), points.end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i].setZero();
  return out;
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::string out = "iteration,total,color,depth,eikonal,sdf_depth\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iteration, r.total, r.color, r.depth,
                  r.eikonal, r.sdf_depth);
    out += buf;
  }
  return out;
}

namespace {

struct PixelRecord {
  Ray ray;
  Vec3 color;
  double distance;  // GT ray distance, unit-sphere units
  Vec3 point;       // GT surface point, unit-sphere units
  Vec2 p_hat;       // conditioning at the GT point
  double t0, t1;
};

struct FrameRecords {
  double time;
  int frame;
  std::vector<PixelRecord> pixels;
};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

class Optimizer {
 public:
  Optimizer(const ParamStore& params, bool adam) : adam_(adam) {
    if (!adam_) return;
    for (const auto& name : params.names()) {
      m_.emplace(name, std::vector<double>(params.value(name).size(), 0.0));
      v_.emplace(name, std::vector<double>(params.value(name).size(), 0.0));
    }
  }

  void step(ParamStore& params, double lr) {
    ++step_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, step_), c2 = 1.0 - std::pow(b2, step_);
    for (const auto& name : params.names()) {
      auto value = params.value(name).data();
      const auto grad = params.grad(name).data();
      if (!adam_) {
        for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * grad[i];
        continue;
      }
      auto& m = m_.at(name);
      auto& v = v_.at(name);
      for (std::size_t i = 0; i < value.size(); ++i) {
        m[i] = b1 * m[i] + (1 - b1) * grad[i];
        v[i] = b2 * v[i] + (1 - b2) * grad[i] * grad[i];
        value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
      }
    }
  }

 private:
  bool adam_;
  int step_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

}  // namespace

TrainResult train(const Scene& scene, const std::vector<Image>& dense_fields, const TrainConfig& config,
                  const FieldArchitecture& arch_template, const TrainProgress& progress) {
  config.validate();
  const int T = static_cast<int>(scene.frames.size());
  if (static_cast<int>(dense_fields.size()) != T) {
    throw ValueError("train: need one dense displacement frame per scene frame (" + std::to_string(T) + "), got " +
                     std::to_string(dense_fields.size()));
  }
  for (const auto& f : dense_fields) {
    if (f.height != scene.intrinsics.height || f.width != scene.intrinsics.width || f.channels < 2) {
      throw ValueError("train: dense field size does not match the frames");
    }
  }
  const auto train_ids = training_frames(T, config);
  if (train_ids.empty()) throw ValueError("train: no training frames");

  FieldArchitecture arch = arch_template;
  arch.calibration = calibrate_scene(scene);
  arch.track_conditioning = config.track_conditioning;
  arch.samples = config.samples_per_ray;
  const auto& norm = arch.calibration.normalization;
  const auto& intr = scene.intrinsics;

  // Ray distances of every GT point fix the sampling interval.
  std::vector<FrameRecords> frames;
  double dmin = INFINITY, dmax = 0.0;
  for (int f : train_ids) {
    const FrameSample& fr = scene.frames[f];
    FrameRecords rec{fr.time, f, {}};
    for (int r = 0; r < fr.height(); ++r) {
      for (int c = 0; c < fr.width(); ++c) {
        if (!fr.mask.at(r, c)) continue;
        const Ray world = pixel_ray(intr, fr.pose, c, r);
        PixelRecord p;
        p.ray = {norm.apply(world.origin), world.direction};
        p.color = Vec3(fr.image.at(r, c, 0), fr.image.at(r, c, 1), fr.image.at(r, c, 2));
        const Vec3 wp = fr.pose.apply(backproject(c, r, fr.depth.at(r, c), intr));
        p.point = norm.apply(wp);
        p.distance = (p.point - p.ray.origin).norm();
        dmin = std::min(dmin, p.distance);
        dmax = std::max(dmax, p.distance);
        rec.pixels.push_back(p);
      }
    }
    frames.push_back(std::move(rec));
  }
  if (config.auto_bounds) {
    arch.near = std::max(0.0, dmin - config.bounds_margin);
    arch.far = dmax + config.bounds_margin;
  } else {
    arch.near = config.near;
    arch.far = config.far;
  }

  TrainResult result;
  result.bundle = FieldBundle::initialize(arch, config.seed);
  FieldBundle& bundle = result.bundle;
  for (auto& fr : frames) {
    std::vector<PixelRecord> kept;
    for (auto& p : fr.pixels) {
      if (!ray_interval(p.ray, arch.near, arch.far, p.t0, p.t1)) continue;
      p.p_hat = conditioning(bundle, &dense_fields[fr.frame], p.point);
      kept.push_back(p);
    }
    fr.pixels = std::move(kept);
  }
  std::erase_if(frames, [](const FrameRecords& f) { return f.pixels.empty(); });
  if (frames.empty()) throw ValueError("train: no foreground pixel intersects the sampling interval");

  const std::size_t R = config.rays_per_batch, n = config.samples_per_ray;
  const std::size_t P = config.eikonal_points;
  RenderGraph rg(bundle, R, n, true, config.weights, P);
  Graph& g = rg.graph();
  Optimizer opt(bundle.params, config.optimizer == "adam");
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  Tensor x_o({R * n, 3}), x_in({R * n, 3}), v_in({R * n, 3}), dirs({R * n, 3}), p_hat({R * n, 2});
  Tensor time({R * n, 1}), t_samples({R * n, 1});
  Tensor gt_rgb({R, 3}), gt_depth({R, 1}), valid({R, 1}, 1.0), dp_x({R, 3}), dp_p({R, 2}), dp_time({R, 1});
  Tensor eik_x({std::max<std::size_t>(P, 1), 3});
  const Tensor depth_norm = Tensor::scalar(1.0 / R);
  std::uniform_real_distribution<double> ball(-1.0, 1.0);

  for (int it = 0; it < config.iterations; ++it) {
    for (std::size_t r = 0; r < R; ++r) {
      const FrameRecords& fr = frames[pick(rng, frames.size())];
      const PixelRecord& px = fr.pixels[pick(rng, fr.pixels.size())];
      const auto ts = stratified_samples(px.t0, px.t1, config.samples_per_ray, rng);
      const auto cleared = ablation_mask(n, config.p_clear, rng);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t row = r * n + k;
        const Vec3 x = px.ray.origin + ts[k] * px.ray.direction;
        const Vec2 ph = conditioning(bundle, &dense_fields[fr.frame], x);
        for (int c = 0; c < 3; ++c) {
          x_o(row, c) = x[c];
          x_in(row, c) = cleared[k] ? 0.0 : x[c];
          v_in(row, c) = cleared[k] ? 0.0 : px.ray.direction[c];
          dirs(row, c) = px.ray.direction[c];
        }
        p_hat(row, 0) = ph.x();
        p_hat(row, 1) = ph.y();
        time[row] = fr.time;
        t_samples[row] = ts[k];
      }
      for (int c = 0; c < 3; ++c) {
        gt_rgb(r, c) = px.color[c];
        dp_x(r, c) = px.point[c];
      }
      gt_depth[r] = px.distance;
      dp_p(r, 0) = px.p_hat.x();
      dp_p(r, 1) = px.p_hat.y();
      dp_time[r] = fr.time;
    }
    for (std::size_t i = 0; i < P; ++i) {
      Vec3 q;
      do q = Vec3(ball(rng), ball(rng), ball(rng));
      while (q.squaredNorm() > 1.0);
      for (int c = 0; c < 3; ++c) eik_x(i, c) = q[c];
    }
    g.forward({{"x_o", x_o},
               {"x_in", x_in},
               {"v_in", v_in},
               {"dirs", dirs},
               {"p_hat", p_hat},
               {"time", time},
               {"t_samples", t_samples},
               {"gt_rgb", gt_rgb},
               {"gt_depth", gt_depth},
               {"depth_valid", valid},
               {"depth_norm", depth_norm},
               {"dp_x", dp_x},
               {"dp_p", dp_p},
               {"dp_time", dp_time},
               {"eik_x", eik_x}});
    LossRecord rec;
    rec.iteration = it;
    rec.color = g.value(rg.color_loss)[0];
    rec.depth = g.value(rg.depth_loss)[0];
    rec.eikonal = g.value(rg.eikonal_loss)[0];
    rec.sdf_depth = g.value(rg.sdf_depth_loss)[0];
    rec.total = g.value(rg.total)[0];
    const std::pair<const char*, double> terms[] = {
        {"color", rec.color}, {"depth", rec.depth}, {"eikonal", rec.eikonal}, {"sdf_depth", rec.sdf_depth}};
    for (const auto& [name, v] : terms) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite " + std::string(name) + " loss at iteration " + std::to_string(it));
      }
    }
    g.zero_grad();
    g.backward(rg.total, Tensor::scalar(1.0));
    bundle.params.zero_grad();
    g.accumulate_into(bundle.params);
    for (const auto& name : bundle.params.names()) {
      if (!bundle.params.grad(name).all_finite()) {
        throw NumericError("non-finite gradient for parameter '" + name + "' at iteration " + std::to_string(it));
      }
    }
    const double lr = config.learning_rate * std::pow(config.lr_decay, static_cast<double>(it) / config.iterations);
    opt.step(bundle.params, lr);
    result.history.push_back(rec);
    if (progress) progress(rec);
  }
  bundle.params.zero_grad();
  return result;
}

}  // namespace tissuedef
