#pragma once

#include <random>
#include <span>
#include <vector>

#include "tissuedef/fields.hpp"
#include "tissuedef/image.hpp"

namespace tissuedef {

struct LossWeights {
  double color = 1.0;
  double depth = 0.5;
  double eikonal = 0.1;
  double sdf_depth = 0.5;
};

/// Rays in unit-sphere coordinates with per-ray supervision.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<Vec3> colors;
  std::vector<double> depths;  ///< expected ray distance, 0 when invalid
  std::vector<std::uint8_t> mask;
  std::vector<double> times;
  std::vector<int> frames;

  std::size_t size() const { return rays.size(); }
  void validate() const;
};

struct RenderResult {
  Vec3 color = Vec3::Zero();
  double depth = 0.0;
  std::vector<double> weights;
  std::vector<double> sample_depths;
  std::vector<double> sdf_values;
  std::vector<Vec3> gradients;  ///< SDF gradient in canonical space at each sample
};

/// [near, far] when that interval overlaps the ray's unit-sphere chord; false otherwise.
bool ray_interval(const Ray& ray, double near, double far, double& t0, double& t1);

/// One uniform draw per equal-width stratum of [near, far].
std::vector<double> stratified_samples(double near, double far, int n, std::mt19937_64& rng);
/// Stratum midpoints (deterministic evaluation).
std::vector<double> midpoint_samples(double near, double far, int n);

/// Dense-field displacement at the reference-camera projection of x_o, or
/// zero when conditioning is disabled, the field is absent or x_o is behind the camera.
Vec2 conditioning(const FieldBundle& bundle, const Image* dense_field, const Vec3& x_o);

/// Batched differentiable renderer for `rays` rays of `samples` samples.
///
/// Per sample: x_c = x_o + deform(x_in, p_hat, t) where x_in is x_o unless
/// the sample was cleared; v_c = normalise(v_o + J v_in) with the Jacobian
/// product taken as a forward tangent; the SDF gradient at x_c comes from
/// three more tangents. Opacity uses the logistic CDF Phi_s(f) = sigmoid(s f):
///   alpha_i = clamp((Phi_s(f_i) - Phi_s(f_{i+1}) + 1e-5) / (Phi_s(f_i) + 1e-5), 0, 1).
///
/// Inputs: x_o, x_in, v_in, dirs [R*n x 3], p_hat [R*n x 2], time and
/// t_samples [R*n x 1]. With losses also gt_rgb [R x 3], gt_depth and
/// depth_valid [R x 1], depth_norm [1 x 1] (1 / number of valid rays), and
/// the GT depth points dp_x [R x 3], dp_p [R x 2], dp_time [R x 1].
/// With `eikonal_points` > 0 the canonical points eik_x [P x 3] join the
/// ray samples in the eikonal mean.
class RenderGraph {
 public:
  RenderGraph(const FieldBundle& bundle, std::size_t rays, std::size_t samples, bool with_losses,
              const LossWeights& weights = {}, std::size_t eikonal_points = 0);

  Graph& graph() { return graph_; }
  std::size_t rays() const { return rays_; }
  std::size_t samples() const { return samples_; }

  Var color, depth, weights, sdf, gradient;
  Var total, color_loss, depth_loss, eikonal_loss, sdf_depth_loss;

 private:
  Graph graph_;
  std::size_t rays_, samples_;
};

/// Renders every ray. Rays missing [near, far] inside the unit sphere come
/// back transparent with zero weights. Samples are stratum midpoints unless `rng` is given.
std::vector<RenderResult> render_rays(const FieldBundle& bundle, std::span<const Ray> rays, double time,
                                      const Image* dense_field, std::mt19937_64* rng = nullptr);
RenderResult render_ray(const FieldBundle& bundle, const Ray& ray, double time, const Image* dense_field);

/// weights.color * mean L1(color) + weights.depth * mean L1(depth) over rays with depth > 0.
double rendering_loss(std::span<const RenderResult> results, const RayBatch& batch, const LossWeights& weights);
/// weights.eikonal * mean (|grad| - 1)^2 over all samples and `eikonal_points` + weights.sdf_depth *
/// mean |sdf| at the canonical positions of the GT depth points.
double geometry_loss(const FieldBundle& bundle, std::span<const RenderResult> results,
                     std::span<const Vec3> canonical_depth_points, const LossWeights& weights,
                     std::span<const Vec3> eikonal_points = {});

}  // namespace tissuedef
