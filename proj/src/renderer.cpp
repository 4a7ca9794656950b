#include "tissuedef/renderer.hpp"

#include <cmath>

#include "tissuedef/error.hpp"
#include "tissuedef/tracking.hpp"

namespace tissuedef {

void RayBatch::validate() const {
  const std::size_t n = rays.size();
  if (colors.size() != n || depths.size() != n || mask.size() != n || times.size() != n || frames.size() != n) {
    throw ShapeError("ray batch fields have inconsistent lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(rays[i].direction.norm() - 1.0) > 1e-9) throw ValueError("ray batch direction is not unit length");
    if (!mask[i]) throw ValueError("ray batch contains a masked-out pixel");
  }
}

bool ray_interval(const Ray& ray, double near, double far, double& t0, double& t1) {
  // |o + t d|^2 = 1 with |d| = 1.
  const double b = ray.origin.dot(ray.direction);
  const double c = ray.origin.squaredNorm() - 1.0;
  const double disc = b * b - c;
  if (disc <= 0.0) return false;
  const double root = std::sqrt(disc);
  // The full interval is sampled: surface points on the bounding-box corners sit
  // exactly on the sphere, and clipping would leave nothing behind them.
  if (std::min(far, -b + root) <= std::max(near, -b - root)) return false;
  t0 = near;
  t1 = far;
  return true;
}

std::vector<double> stratified_samples(double near, double far, int n, std::mt19937_64& rng) {
  if (!(near < far) || n < 2) throw ValueError("stratified_samples: need near < far and n >= 2");
  std::vector<double> out(n);
  const double width = (far - near) / n;
  for (int i = 0; i < n; ++i) {
    // 53 random bits, uniform in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    out[i] = near + (i + u) * width;
  }
  return out;
}

std::vector<double> midpoint_samples(double near, double far, int n) {
  if (!(near < far) || n < 2) throw ValueError("midpoint_samples: need near < far and n >= 2");
  std::vector<double> out(n);
  const double width = (far - near) / n;
  for (int i = 0; i < n; ++i) out[i] = near + (i + 0.5) * width;
  return out;
}

Vec2 conditioning(const FieldBundle& bundle, const Image* dense_field, const Vec3& x_o) {
  if (!bundle.arch.track_conditioning || dense_field == nullptr) return Vec2::Zero();
  Vec2 px;
  if (!bundle.arch.calibration.reference_pixel(x_o, px)) return Vec2::Zero();
  return sample_field(*dense_field, px.x(), px.y());
}

namespace {

constexpr const char* kLogSharpness = "render.log_sharpness";

}  // namespace

RenderGraph::RenderGraph(const FieldBundle& bundle, std::size_t rays, std::size_t samples, bool with_losses,
                         const LossWeights& w, std::size_t eikonal_points)
    : graph_(&bundle.params), rays_(rays), samples_(samples) {
  Graph& g = graph_;
  const auto& arch = bundle.arch;
  const Var x_o = g.input("x_o");
  const Var x_in = g.input("x_in");
  const Var v_in = g.input("v_in");
  const Var dirs = g.input("dirs");
  const Var p_hat = g.input("p_hat");
  const Var time = g.input("time");
  const Var t_samples = g.input("t_samples");

  const Dual d = net::deform(g, arch, Dual{x_in, {v_in}}, p_hat, time);
  const Var x_c = g.add(x_o, d.value);
  const Var v_raw = g.add(dirs, d.tangents[0]);
  const Var v_c = g.div(v_raw, g.row_norm(v_raw));

  const Dual s = net::sdf(g, arch, Dual{x_c, {net::axis(g, 0), net::axis(g, 1), net::axis(g, 2)}});
  sdf = g.slice_cols(s.value, 0, 1);
  const Var feature = g.slice_cols(s.value, 1, 1 + arch.feature_dim);
  gradient = g.concat_cols(
      {g.slice_cols(s.tangents[0], 0, 1), g.slice_cols(s.tangents[1], 0, 1), g.slice_cols(s.tangents[2], 0, 1)});
  const Var rgb = net::radiance(g, arch, x_c, v_c, gradient, feature);
  const Var sharp = g.exp(g.param(kLogSharpness));
  const Var out = g.volume_render(sdf, rgb, t_samples, sharp, samples);
  color = g.slice_cols(out, 0, 3);
  depth = g.slice_cols(out, 3, 4);
  weights = g.slice_cols(out, 4, 4 + samples);
  g.set_output("color", color);
  g.set_output("depth", depth);
  g.set_output("weights", weights);
  g.set_output("sdf", sdf);
  g.set_output("gradient", gradient);
  if (!with_losses) return;

  const Var gt_rgb = g.input("gt_rgb");
  const Var gt_depth = g.input("gt_depth");
  const Var valid = g.input("depth_valid");
  const Var depth_norm = g.input("depth_norm");
  const Var dp_x = g.input("dp_x");
  const Var dp_p = g.input("dp_p");
  const Var dp_time = g.input("dp_time");

  color_loss = g.scale(g.sum(g.abs(g.sub(color, gt_rgb))), 1.0 / (3.0 * rays));
  depth_loss = g.mul(g.sum(g.mul(g.abs(g.sub(depth, gt_depth)), valid)), depth_norm);
  const Var one = g.constant(Tensor::scalar(1.0));
  const Var residual = g.sub(g.row_norm(gradient), one);
  Var eik_sum = g.sum(g.mul(residual, residual));
  if (eikonal_points > 0) {
    const Dual e = net::sdf(g, arch, Dual{g.input("eik_x"), {net::axis(g, 0), net::axis(g, 1), net::axis(g, 2)}});
    const Var e_grad = g.concat_cols(
        {g.slice_cols(e.tangents[0], 0, 1), g.slice_cols(e.tangents[1], 0, 1), g.slice_cols(e.tangents[2], 0, 1)});
    const Var e_res = g.sub(g.row_norm(e_grad), one);
    eik_sum = g.add(eik_sum, g.sum(g.mul(e_res, e_res)));
  }
  eikonal_loss = g.scale(eik_sum, 1.0 / static_cast<double>(rays * samples + eikonal_points));
  const Dual dp_def = net::deform(g, arch, Dual{dp_x, {}}, dp_p, dp_time);
  const Dual dp_sdf = net::sdf(g, arch, Dual{g.add(dp_x, dp_def.value), {}});
  sdf_depth_loss = g.mul(g.sum(g.mul(g.abs(g.slice_cols(dp_sdf.value, 0, 1)), valid)), depth_norm);

  total = g.add(g.add(g.scale(color_loss, w.color), g.scale(depth_loss, w.depth)),
                g.add(g.scale(eikonal_loss, w.eikonal), g.scale(sdf_depth_loss, w.sdf_depth)));
  g.set_output("total", total);
  g.set_output("color_loss", color_loss);
  g.set_output("depth_loss", depth_loss);
  g.set_output("eikonal_loss", eikonal_loss);
  g.set_output("sdf_depth_loss", sdf_depth_loss);
}

std::vector<RenderResult> render_rays(const FieldBundle& bundle, std::span<const Ray> rays, double time,
                                      const Image* dense_field, std::mt19937_64* rng) {
  const auto& arch = bundle.arch;
  const std::size_t n = static_cast<std::size_t>(arch.samples);
  std::vector<RenderResult> results(rays.size());
  std::vector<std::size_t> hit;
  std::vector<std::vector<double>> ts;
  for (std::size_t i = 0; i < rays.size(); ++i) {
    double t0, t1;
    if (!ray_interval(rays[i], arch.near, arch.far, t0, t1)) continue;
    hit.push_back(i);
    ts.push_back(rng ? stratified_samples(t0, t1, arch.samples, *rng) : midpoint_samples(t0, t1, arch.samples));
  }
  constexpr std::size_t kChunk = 128;
  for (std::size_t b = 0; b < hit.size(); b += kChunk) {
    const std::size_t R = std::min(kChunk, hit.size() - b);
    Tensor x({R * n, 3}), dirs({R * n, 3}), p({R * n, 2}), tt({R * n, 1});
    for (std::size_t r = 0; r < R; ++r) {
      const Ray& ray = rays[hit[b + r]];
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t row = r * n + k;
        const double s = ts[b + r][k];
        const Vec3 xo = ray.origin + s * ray.direction;
        const Vec2 ph = conditioning(bundle, dense_field, xo);
        for (int c = 0; c < 3; ++c) {
          x(row, c) = xo[c];
          dirs(row, c) = ray.direction[c];
        }
        p(row, 0) = ph.x();
        p(row, 1) = ph.y();
        tt[row] = s;
      }
    }
    RenderGraph rg(bundle, R, n, false);
    rg.graph().forward({{"x_o", x},
                        {"x_in", x},
                        {"v_in", dirs},
                        {"dirs", dirs},
                        {"p_hat", p},
                        {"time", Tensor({R * n, 1}, time)},
                        {"t_samples", tt}});
    const Tensor& col = rg.graph().value(rg.color);
    const Tensor& dep = rg.graph().value(rg.depth);
    const Tensor& wts = rg.graph().value(rg.weights);
    const Tensor& sd = rg.graph().value(rg.sdf);
    const Tensor& gr = rg.graph().value(rg.gradient);
    for (std::size_t r = 0; r < R; ++r) {
      RenderResult& res = results[hit[b + r]];
      res.color = Vec3(col(r, 0), col(r, 1), col(r, 2));
      res.depth = dep[r];
      res.sample_depths = ts[b + r];
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t row = r * n + k;
        res.weights.push_back(wts(r, k));
        res.sdf_values.push_back(sd[row]);
        res.gradients.emplace_back(gr(row, 0), gr(row, 1), gr(row, 2));
      }
    }
  }
  return results;
}

RenderResult render_ray(const FieldBundle& bundle, const Ray& ray, double time, const Image* dense_field) {
  return render_rays(bundle, {&ray, 1}, time, dense_field)[0];
}

double rendering_loss(std::span<const RenderResult> results, const RayBatch& batch, const LossWeights& w) {
  if (results.size() != batch.size() || batch.colors.size() != batch.size() || batch.depths.size() != batch.size()) {
    throw ShapeError("rendering_loss: results and batch differ in length");
  }
  if (results.empty()) return 0.0;
  double color = 0.0, depth = 0.0;
  std::size_t valid = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    color += (results[i].color - batch.colors[i]).cwiseAbs().sum();
    if (batch.depths[i] > 0.0) {
      depth += std::abs(results[i].depth - batch.depths[i]);
      ++valid;
    }
  }
  color /= 3.0 * results.size();
  if (valid > 0) depth /= valid;
  return w.color * color + w.depth * depth;
}

double geometry_loss(const FieldBundle& bundle, std::span<const RenderResult> results,
                     std::span<const Vec3> canonical_depth_points, const LossWeights& w,
                     std::span<const Vec3> eikonal_points) {
  double eik = 0.0;
  std::size_t count = 0;
  for (const auto& r : results) {
    for (const auto& grad : r.gradients) {
      const double e = grad.norm() - 1.0;
      eik += e * e;
      ++count;
    }
  }
  for (const Vec3& grad : sdf_gradient_batch(bundle, eikonal_points)) {
    const double e = grad.norm() - 1.0;
    eik += e * e;
    ++count;
  }
  if (count > 0) eik /= count;
  double sd = 0.0;
  if (!canonical_depth_points.empty()) {
    for (double v : sdf_batch(bundle, canonical_depth_points)) sd += std::abs(v);
    sd /= canonical_depth_points.size();
  }
  return w.eikonal * eik + w.sdf_depth * sd;
}

}  // namespace tissuedef
