#pragma once

// Full render-loss evaluation on a small fixed batch, for gradient checks.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tissuedef/fields.hpp"
#include "tissuedef/renderer.hpp"

namespace rendercheck {

struct Batch {
  std::size_t rays = 4;
  std::size_t samples = 8;
  std::map<std::string, tissuedef::Tensor> inputs;
};

inline tissuedef::FieldArchitecture arch() {
  tissuedef::FieldArchitecture a;
  a.calibration.intrinsics.fx = a.calibration.intrinsics.fy = 64;
  a.calibration.intrinsics.cx = a.calibration.intrinsics.cy = 31.5;
  a.calibration.intrinsics.width = a.calibration.intrinsics.height = 64;
  a.calibration.normalization.center = tissuedef::Vec3(0, 0, 1);
  a.calibration.normalization.scale = 1.5;
  a.near = 0.8;
  a.far = 2.2;
  a.samples = 8;
  return a;
}

// Initialized bundle with every parameter nudged so no gradient is trivially zero.
inline tissuedef::FieldBundle bundle(std::uint64_t seed) {
  tissuedef::FieldBundle b = tissuedef::FieldBundle::initialize(arch(), seed);
  std::mt19937_64 rng(seed * 7 + 1);
  std::normal_distribution<double> n(0.0, 0.01);
  for (const auto& name : b.params.names())
    for (double& v : b.params.value(name).data()) v += n(rng);
  return b;
}

// Rays from the normalised camera centre towards the unit sphere, stratified
// samples, random supervision. Some samples are cleared to exercise the ablation inputs.
inline Batch make_batch(std::uint64_t seed, std::size_t rays = 4, std::size_t samples = 8) {
  using tissuedef::Tensor;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3), u01(0, 1);
  Batch b;
  b.rays = rays;
  b.samples = samples;
  const std::size_t N = rays * samples;
  Tensor x_o({N, 3}), x_in({N, 3}), v_in({N, 3}), dirs({N, 3}), p_hat({N, 2}), time({N, 1}), ts({N, 1});
  Tensor gt_rgb({rays, 3}), gt_depth({rays, 1}), valid({rays, 1}), dp_x({rays, 3}), dp_p({rays, 2}), dp_t({rays, 1});
  const tissuedef::Vec3 origin(0, 0, -1.5);
  std::size_t valid_count = 0;
  for (std::size_t r = 0; r < rays; ++r) {
    const tissuedef::Vec3 d = (tissuedef::Vec3(u(rng), u(rng), 1.5) - origin).normalized();
    const double t = u01(rng);
    const auto s = tissuedef::stratified_samples(0.8, 2.2, static_cast<int>(samples), rng);
    for (std::size_t k = 0; k < samples; ++k) {
      const std::size_t row = r * samples + k;
      const tissuedef::Vec3 x = origin + s[k] * d;
      const bool cleared = (row % 5) == 3;
      for (int c = 0; c < 3; ++c) {
        x_o(row, c) = x[c];
        x_in(row, c) = cleared ? 0.0 : x[c];
        v_in(row, c) = cleared ? 0.0 : d[c];
        dirs(row, c) = d[c];
      }
      p_hat(row, 0) = 2 * u(rng);
      p_hat(row, 1) = 2 * u(rng);
      time[row] = t;
      ts[row] = s[k];
    }
    for (int c = 0; c < 3; ++c) gt_rgb(r, c) = u01(rng);
    const double depth = 1.2 + u(rng);
    valid[r] = r == 2 ? 0.0 : 1.0;
    valid_count += r == 2 ? 0 : 1;
    gt_depth[r] = depth;
    const tissuedef::Vec3 p = origin + depth * d;
    for (int c = 0; c < 3; ++c) dp_x(r, c) = p[c];
    dp_p(r, 0) = u(rng);
    dp_p(r, 1) = u(rng);
    dp_t[r] = t;
  }
  b.inputs = {{"x_o", x_o},       {"x_in", x_in},       {"v_in", v_in},   {"dirs", dirs},
              {"p_hat", p_hat},   {"time", time},       {"t_samples", ts}, {"gt_rgb", gt_rgb},
              {"gt_depth", gt_depth}, {"depth_valid", valid}, {"dp_x", dp_x}, {"dp_p", dp_p},
              {"dp_time", dp_t},  {"depth_norm", Tensor::scalar(1.0 / valid_count)}};
  return b;
}

inline double total_loss(const tissuedef::FieldBundle& bundle, const Batch& batch) {
  tissuedef::RenderGraph rg(bundle, batch.rays, batch.samples, true);
  rg.graph().forward(batch.inputs);
  return rg.graph().value(rg.total)[0];
}

// Reverse-mode gradients of the total loss, one tensor per parameter name.
inline std::map<std::string, tissuedef::Tensor> total_loss_gradients(const tissuedef::FieldBundle& bundle,
                                                                     const Batch& batch) {
  tissuedef::RenderGraph rg(bundle, batch.rays, batch.samples, true);
  rg.graph().forward(batch.inputs);
  rg.graph().backward(rg.total, tissuedef::Tensor::scalar(1.0));
  std::map<std::string, tissuedef::Tensor> out;
  tissuedef::ParamStore store = bundle.params;
  store.zero_grad();
  rg.graph().accumulate_into(store);
  for (const auto& name : store.names()) out.emplace(name, store.grad(name));
  return out;
}

struct Entry {
  std::string name;
  std::size_t index;
};

// Seven-point central difference. The loss is O(1) while some gradients are
// O(1e-9), so the step has to be large enough to beat rounding, and the
// beta = 100 softplus layers have large high derivatives, so the stencil
// has to be O(h^6) for that step to be accurate.
inline double fd_derivative(const tissuedef::FieldBundle& bundle, const Batch& batch, const Entry& e,
                            double h = 3e-5) {
  tissuedef::FieldBundle p = bundle;
  double& x = p.params.value(e.name)[e.index];
  const double x0 = x;
  auto at = [&](double step) {
    x = x0 + step;
    return total_loss(p, batch);
  };
  return (45.0 * (at(h) - at(-h)) - 9.0 * (at(2 * h) - at(-2 * h)) + (at(3 * h) - at(-3 * h))) / (60.0 * h);
}

// Random parameter entries, at most one per tensor, so the subset spans the three nets and the sharpness.
inline std::vector<Entry> random_subset(const tissuedef::FieldBundle& b, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto names = b.params.names();
  std::shuffle(names.begin(), names.end(), rng);
  std::vector<Entry> out;
  // The sharpness is always included.
  out.push_back({"render.log_sharpness", 0});
  for (const auto& n : names) {
    if (out.size() == count) break;
    if (n == "render.log_sharpness") continue;
    out.push_back({n, static_cast<std::size_t>(rng() % b.params.value(n).size())});
  }
  return out;
}

}  // namespace rendercheck
