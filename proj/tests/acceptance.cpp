// Acceptance runner: one PASS/FAIL line per criterion. Criterion numbers may
// be given as arguments to run a subset; the default is all nine.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "oracles.hpp"
#include "render_check.hpp"
#include "test_util.hpp"
#include "tissuedef/checkpoint.hpp"
#include "tissuedef/config.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/image.hpp"
#include "tissuedef/mesh.hpp"
#include "tissuedef/metrics.hpp"
#include "tissuedef/pipeline.hpp"
#include "tissuedef/spatial_index.hpp"
#include "tissuedef/tracking.hpp"
#include "tissuedef/trainer.hpp"

using namespace tissuedef;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
  return buf;
}

// ---------------------------------------------------------------- 1

ParamStore random_mlp(std::mt19937_64& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  ParamStore p;
  p.add("l0.w", testutil::random_tensor(in, hidden, rng));
  p.add("l0.b", testutil::random_tensor(1, hidden, rng));
  p.add("l1.w", testutil::random_tensor(hidden, out, rng));
  p.add("l1.b", testutil::random_tensor(1, out, rng));
  return p;
}

Var mlp(Graph& g, Var x) {
  Var h = g.softplus(g.add(g.matmul(x, g.param("l0.w")), g.param("l0.b")));
  return g.add(g.matmul(h, g.param("l1.w")), g.param("l1.b"));
}

double mlp_loss(const ParamStore& p, const Tensor& x) {
  Graph g(&p);
  Var y = g.sum(mlp(g, g.input("x")));
  g.forward({{"x", x}});
  return g.value(y)[0];
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  double worst_mlp = 0;
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 10; ++trial) {
    const ParamStore p = random_mlp(rng, 4, 8, 3);
    const Tensor x = testutil::random_tensor(6, 4, rng);
    Graph g(&p);
    Var y = g.sum(mlp(g, g.input("x")));
    g.forward({{"x", x}});
    g.backward(y, Tensor::scalar(1.0));
    for (const std::string& name : p.names()) {
      const Tensor& ga = g.param_grad(name);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        auto f = [&](const Tensor& v) {
          ParamStore q = p;
          q.value(name) = v;
          return mlp_loss(q, x);
        };
        worst_mlp = std::max(worst_mlp, testutil::rel_error(ga[i], testutil::central_diff(f, p.value(name), i)));
      }
    }
  }
  double worst_render = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const FieldBundle b = rendercheck::bundle(seed);
    const auto batch = rendercheck::make_batch(seed + 10, 4);
    const auto grads = rendercheck::total_loss_gradients(b, batch);
    for (const auto& e : rendercheck::random_subset(b, 24, seed + 20)) {
      const double fd = rendercheck::fd_derivative(b, batch, e);
      worst_render = std::max(worst_render, testutil::rel_error(grads.at(e.name)[e.index], fd));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_mlp < 1e-4 && worst_render < 1e-4 && secs < 30,
          fmt("mlp max rel %.3g, render loss max rel %.3g, %.1f s", worst_mlp, worst_render, secs)};
}

// ---------------------------------------------------------------- 2

Image random_lattice(int hg, int wg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-5, 5);
  Image l(hg, wg, 2);
  for (double& v : l.data) v = u(rng);
  return l;
}

Outcome densify_oracle() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> gsz(2, 16), isz(2, 96);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int hg = gsz(rng), wg = gsz(rng);
    const int H = std::max(hg, isz(rng)), W = std::max(wg, isz(rng));
    const Image l = random_lattice(hg, wg, rng);
    const Image a = densify(l, H, W);
    const Image b = oracle::densify(l, H, W);
    for (std::size_t k = 0; k < a.data.size(); ++k) worst = std::max(worst, std::abs(a.data[k] - b.data[k]));
  }
  double worst_centre = 0;
  for (auto [H, W, hg, wg] : {std::tuple{64, 64, 16, 16}, {40, 60, 5, 6}, {33, 17, 11, 17}, {9, 7, 3, 7}}) {
    const Image l = random_lattice(hg, wg, rng);
    const KeypointGrid g = sample_grid(H, W, hg, wg);
    for (int i = 0; i < hg; ++i)
      for (int j = 0; j < wg; ++j) {
        const Vec2 v = sample_lattice(l, g.at(i, j).x(), g.at(i, j).y(), H, W);
        worst_centre = std::max({worst_centre, std::abs(v.x() - l.at(i, j, 0)), std::abs(v.y() - l.at(i, j, 1))});
      }
  }
  return {worst <= 1e-12 && worst_centre <= 1e-9,
          fmt("max |densify - oracle| %.3g over 50 cases, max cell-centre error %.3g", worst, worst_centre)};
}

// ---------------------------------------------------------------- 3

Outcome nearest_neighbour() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> count(1, 10000), lattice(-4, 4);
  std::uniform_real_distribution<double> u(-1, 1);
  int mismatches = 0, queries = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const int n = instance == 0 ? 10000 : count(rng);
    // Every fourth instance sits on an integer lattice so exact ties occur.
    const bool ties = instance % 4 == 1;
    std::vector<Vec3> pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i) {
      pts.push_back(ties ? Vec3(lattice(rng), lattice(rng), lattice(rng)) : Vec3(u(rng), u(rng), 0.3 * u(rng)));
    }
    const SpatialIndex idx = build_index(pts);
    for (int q = 0; q < 20; ++q) {
      const Vec3 query = ties ? Vec3(lattice(rng) + 0.5 * (q % 2), lattice(rng), lattice(rng))
                              : Vec3(1.5 * u(rng), 1.5 * u(rng), u(rng));
      double best;
      const std::size_t expect = oracle::nearest(pts, query, best);
      const auto hit = idx.nearest(query);
      ++queries;
      if (hit.index != expect || hit.squared_distance != best) ++mismatches;
    }
  }
  return {mismatches == 0, fmt("%g mismatches in %g queries over 100 sets", mismatches, queries)};
}

// ---------------------------------------------------------------- 4

Outcome marching_cubes_sphere() {
  const int n = 32;
  const double cell = 2.0 / (n - 1);
  const auto t0 = Clock::now();
  const TriangleMesh m = marching_cubes_pointwise([](const Vec3& p) { return p.norm() - 0.5; }, Box{}, n);
  const double secs = seconds_since(t0);
  double worst = 0, mean = 0;
  for (const Vec3& v : m.vertices) {
    const double e = std::abs(v.norm() - 0.5);
    worst = std::max(worst, e);
    mean += e;
  }
  if (!m.vertices.empty()) mean /= m.vertices.size();
  return {!m.vertices.empty() && worst < 1.5 * cell && mean < 0.5 * cell && secs < 10,
          fmt("%g vertices, max %.3g cell, mean %.3g cell, %.2f s", m.vertices.size(), worst / cell, mean / cell,
              secs)};
}

// ---------------------------------------------------------------- 5-7

struct Run {
  FieldBundle bundle;
  MetricReport report;
  double seconds = 0;
};

RunConfig bump_config() {
  RunConfig c;
  c.seed = 1;
  c.train.seed = 1;
  c.synthetic.texture_seed = 1;
  return c;
}

class Experiments {
 public:
  Experiments() : config_(bump_config()), synth_(synthesize(config_)) {
    dense_ = dense_fields_from_tracks(synth_.tracks, config_.image_height, config_.image_width);
  }

  const RunConfig& config() const { return config_; }

  const Run& run(bool tracked, double p_clear) {
    const auto key = std::make_pair(tracked, p_clear);
    auto it = runs_.find(key);
    if (it != runs_.end()) return it->second;
    TrainConfig tc = config_.train;
    tc.track_conditioning = tracked;
    tc.p_clear = p_clear;
    std::printf("  training: %s conditioning, p_clear %.1f, %d iterations\n", tracked ? "tracked" : "zeroed", p_clear,
                tc.iterations);
    std::fflush(stdout);
    const auto t0 = Clock::now();
    Run r{train(synth_.scene, dense_, tc, config_.arch).bundle, {}, 0};
    r.seconds = seconds_since(t0);
    const auto frames = heldout_frames(static_cast<int>(synth_.scene.frames.size()), tc);
    r.report = evaluate(r.bundle, synth_.scene, dense_, frames, &synth_.gt_deformation);
    std::printf("  done in %.0f s: deformation MSE %.5g, MaxSE %.5g, PSNR %.2f\n", r.seconds, r.report.deformation_mse,
                r.report.deformation_maxse, r.report.psnr);
    std::fflush(stdout);
    return runs_.emplace(key, std::move(r)).first->second;
  }

 private:
  RunConfig config_;
  SynthOutput synth_;
  std::vector<Image> dense_;
  std::map<std::pair<bool, double>, Run> runs_;
};

Outcome deformation_recovery(Experiments& ex) {
  const Run& r = ex.run(true, 0.0);
  const double a_unit = ex.config().synthetic.amplitude * r.bundle.arch.calibration.normalization.scale;
  const double a2 = a_unit * a_unit;
  const bool ok = ex.config().train.iterations <= 3000 && r.seconds <= 15 * 60 && r.report.deformation_mse < 0.25 * a2 &&
                  r.report.deformation_maxse < a2 && r.report.psnr > 25;
  return {ok, fmt("MSE %.4g (< %.4g), MaxSE %.4g (< %.4g), PSNR %.2f dB", r.report.deformation_mse, 0.25 * a2,
                  r.report.deformation_maxse, a2, r.report.psnr) +
                  fmt(", %.0f s", r.seconds)};
}

Outcome ordering(Experiments& ex) {
  const double tracked = ex.run(true, 0.0).report.deformation_mse;
  const double baseline = ex.run(false, 0.0).report.deformation_mse;
  const double tracked_noisy = ex.run(true, 0.3).report.deformation_mse;
  const double baseline_noisy = ex.run(false, 0.3).report.deformation_mse;
  const double f_tracked = tracked_noisy / tracked, f_baseline = baseline_noisy / baseline;
  return {baseline >= tracked && f_tracked < f_baseline,
          fmt("MSE zeroed %.5g vs tracked %.5g; ablation factor tracked %.4f vs zeroed %.4f", baseline, tracked,
              f_tracked, f_baseline)};
}

Outcome eikonal(Experiments& ex) {
  const FieldBundle& b = ex.run(true, 0.0).bundle;
  std::mt19937_64 rng(707);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<Vec3> pts;
  while (pts.size() < 10000) {
    const Vec3 p(u(rng), u(rng), u(rng));
    if (p.norm() < 0.8) pts.push_back(p);
  }
  const auto grads = sdf_gradient_batch(b, pts);
  std::size_t inside = 0;
  for (const Vec3& g : grads) {
    const double n = g.norm();
    if (n >= 0.9 && n <= 1.1) ++inside;
  }
  const double frac = static_cast<double>(inside) / pts.size();
  return {frac >= 0.95, fmt("%.2f%% of 10000 gradient norms in [0.9, 1.1]", 100 * frac)};
}

// ---------------------------------------------------------------- 8

Outcome metric_self_checks() {
  const double p = psnr(Image(16, 16, 3, 0.2), Image(16, 16, 3, 0.3));
  std::mt19937_64 rng(808);
  std::uniform_real_distribution<double> u(0, 1);
  Image a(32, 29, 3);
  for (double& v : a.data) v = u(rng);
  const double s = ssim(a, a);
  Image pred(1, 2, 3), zero(1, 2, 3);
  pred.at(0, 0, 0) = 1;
  pred.at(0, 1, 1) = 2;
  pred.at(0, 1, 2) = 2;
  const auto e = deformation_errors(pred, zero, Mask(1, 2, true));
  Mask one(1, 2, false);
  one.set(0, 0, true);
  const auto f = deformation_errors(pred, zero, one);
  const bool hand = e.mse == 4.5 && e.maxse == 8.0 && f.mse == 1.0 && f.maxse == 1.0 &&
                    deformation_errors(pred, pred, Mask(1, 2, true)).maxse == 0.0;
  return {std::abs(p - 20.0) <= 1e-9 && std::abs(s - 1.0) <= 1e-9 && hand,
          fmt("psnr %.12f dB, ssim(a,a) %.12f, deformation hand cases ", p, s) + (hand ? "exact" : "wrong")};
}

// ---------------------------------------------------------------- 9

Outcome round_trips() {
  testutil::TempDir dir("acceptance_io");
  std::mt19937_64 rng(909);
  std::uniform_real_distribution<double> u(-1, 1), c01(0, 1);
  std::vector<std::string> failures;

  // PLY stores float32 coordinates and 8-bit colours.
  TriangleMesh m = marching_cubes_pointwise([](const Vec3& p) { return p.norm() - 0.5; }, Box{}, 16);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) m.colors.emplace_back(c01(rng), c01(rng), c01(rng));
  export_ply(m, dir.path() / "m.ply");
  const TriangleMesh mr = import_ply(dir.path() / "m.ply");
  bool ply_ok = mr.vertices.size() == m.vertices.size() && mr.triangles == m.triangles && mr.has_colors();
  for (std::size_t i = 0; ply_ok && i < m.vertices.size(); ++i) {
    ply_ok = (mr.vertices[i] - m.vertices[i]).cwiseAbs().maxCoeff() <= 0x1.0p-24 * 2 &&
             (mr.colors[i] - m.colors[i]).cwiseAbs().maxCoeff() <= 0.5 / 255 + 1e-12;
  }
  if (!ply_ok) failures.push_back("ply");

  // PFM stores float32.
  Image im(13, 7, 3);
  for (double& v : im.data) v = 10 * u(rng);
  write_pfm(im, dir.path() / "x.pfm");
  const Image ir = read_pfm(dir.path() / "x.pfm");
  bool pfm_ok = ir.height == im.height && ir.width == im.width && ir.channels == im.channels;
  for (std::size_t k = 0; pfm_ok && k < im.data.size(); ++k) {
    pfm_ok = ir.data[k] == static_cast<double>(static_cast<float>(im.data[k]));
  }
  if (!pfm_ok) failures.push_back("pfm");

  // Track JSON and checkpoints are exact.
  const SynthOutput s = synthesize([] {
    RunConfig c = bump_config();
    c.image_height = c.image_width = 32;
    c.grid_height = c.grid_width = 8;
    return c;
  }());
  save_tracks(s.tracks, dir.path() / "tracks.json");
  const TrackGrid tr = load_tracks(dir.path() / "tracks.json");
  if (!(tr.points == s.tracks.points && tr.visible == s.tracks.visible && tr.frames == s.tracks.frames &&
        tr.grid_height == s.tracks.grid_height && tr.image_width == s.tracks.image_width)) {
    failures.push_back("tracks");
  }

  const FieldBundle b = rendercheck::bundle(9);
  save_checkpoint(b.params, dir.path() / "params.json");
  const ParamStore pr = load_checkpoint(dir.path() / "params.json");
  bool ck_ok = pr.names() == b.params.names();
  for (const auto& name : b.params.names()) {
    if (!ck_ok) break;
    ck_ok = pr.value(name).shape() == b.params.value(name).shape() &&
            std::ranges::equal(pr.value(name).data(), b.params.value(name).data());
  }
  if (!ck_ok) failures.push_back("checkpoint");

  std::string detail = "ply, pfm, track json, checkpoint";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) {
    const int k = std::atoi(argv[i]);
    if (k < 1 || k > 9) {
      std::fprintf(stderr, "usage: %s [criterion 1-9]...\n", argv[0]);
      return 1;
    }
    wanted.insert(k);
  }
  if (wanted.empty())
    for (int k = 1; k <= 9; ++k) wanted.insert(k);

  std::optional<Experiments> experiments;
  auto ex = [&]() -> Experiments& {
    if (!experiments) experiments.emplace();
    return *experiments;
  };

  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"gradient fidelity", gradient_fidelity}},
      {2, {"densification oracle", densify_oracle}},
      {3, {"nearest-neighbour exactness", nearest_neighbour}},
      {4, {"marching cubes sphere", marching_cubes_sphere}},
      {5, {"synthetic deformation recovery", [&] { return deformation_recovery(ex()); }}},
      {6, {"tracked vs zeroed ordering", [&] { return ordering(ex()); }}},
      {7, {"eikonal after training", [&] { return eikonal(ex()); }}},
      {8, {"metric self-checks", metric_self_checks}},
      {9, {"format round trips", round_trips}},
  };

  int failed = 0;
  for (int k : wanted) {
    const auto& [name, check] = criteria.at(k);
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
