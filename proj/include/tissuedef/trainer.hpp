#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tissuedef/fields.hpp"
#include "tissuedef/renderer.hpp"
#include "tissuedef/scene_io.hpp"

namespace tissuedef {

struct TrainConfig {
  int iterations = 3000;
  int rays_per_batch = 64;
  int samples_per_ray = 32;
  /// Derive near/far from the GT depth range (plus margin) instead of `near`/`far`.
  bool auto_bounds = true;
  double near = 0.0;
  double far = 2.0;
  double bounds_margin = 0.15;
  double learning_rate = 5e-4;
  double lr_decay = 0.1;  ///< learning-rate factor reached at the final iteration
  std::string optimizer = "adam";  ///< "adam" or "sgd"
  LossWeights weights;
  /// Points drawn uniformly in the unit sphere each iteration for the eikonal
  /// term; ray samples alone only constrain a slab around the surface.
  int eikonal_points = 512;
  double p_clear = 0.0;
  bool track_conditioning = true;
  std::uint64_t seed = 0;
  int holdout_period = 8;
  int holdout_offset = 4;

  /// Throws ConfigError naming the offending field ("train.<field>").
  void validate() const;
};

struct LossRecord {
  int iteration = 0;
  double total = 0, color = 0, depth = 0, eikonal = 0, sdf_depth = 0;
};

struct TrainResult {
  FieldBundle bundle;
  std::vector<LossRecord> history;
};

/// Frame indices used for training / held out for evaluation (every
/// `holdout_period`-th frame starting at `holdout_offset`).
std::vector<int> training_frames(int frame_count, const TrainConfig& config);
std::vector<int> heldout_frames(int frame_count, const TrainConfig& config);

/// Unit-sphere normalisation over every frame's foreground points, with frame 0 as reference camera.
SceneCalibration calibrate_scene(const Scene& scene);

using TrainProgress = std::function<void(const LossRecord&)>;

/// Optimises every field parameter and the sharpness. `dense_fields` holds
/// one H x W x 2 (or 3) displacement frame per scene frame. Deterministic
/// given `config.seed`; a non-finite loss term raises NumericError naming it.
TrainResult train(const Scene& scene, const std::vector<Image>& dense_fields, const TrainConfig& config,
                  const FieldArchitecture& arch, const TrainProgress& progress = {});

/// Independent Bernoulli(p_clear) flags, one per point.
std::vector<std::uint8_t> ablation_mask(std::size_t count, double p_clear, std::mt19937_64& rng);
/// Zeroes each point independently with probability p_clear.
std::vector<Vec3> ablate_reference(std::span<const Vec3> points, double p_clear, std::mt19937_64& rng);

std::string history_csv(const std::vector<LossRecord>& history);

}  // namespace tissuedef
