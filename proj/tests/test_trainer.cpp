#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "tissuedef/error.hpp"
#include "tissuedef/synthetic.hpp"
#include "tissuedef/trainer.hpp"

using namespace tissuedef;

namespace {

Scene small_scene(double amplitude, int size = 16) {
  BumpSceneConfig c;
  c.amplitude = amplitude;
  c.occluder = false;
  const Intrinsics k = default_synthetic_intrinsics(size, size);
  auto seq = render_synthetic_frames(make_bump_scene(c), k);
  return Scene{k, std::move(seq.frames)};
}

std::vector<Image> zero_fields(const Scene& s) {
  return std::vector<Image>(s.frames.size(), Image(s.intrinsics.height, s.intrinsics.width, 2));
}

FieldArchitecture small_arch() {
  FieldArchitecture a;
  a.position.frequencies = 4;
  a.time.frequencies = 2;
  a.deform_width = a.sdf_width = a.radiance_width = 32;
  a.feature_dim = 8;
  return a;
}

TrainConfig small_config(int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.rays_per_batch = 16;
  c.samples_per_ray = 16;
  c.seed = 3;
  return c;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  return v[v.size() / 2];
}

}  // namespace

TEST(Ablation, Fractions) {
  std::mt19937_64 rng(1);
  const auto none = ablation_mask(1000, 0.0, rng);
  EXPECT_TRUE(std::all_of(none.begin(), none.end(), [](auto m) { return m == 0; }));
  const auto all = ablation_mask(1000, 1.0, rng);
  EXPECT_TRUE(std::all_of(all.begin(), all.end(), [](auto m) { return m == 1; }));
  const auto half = ablation_mask(10000, 0.5, rng);
  const double frac = std::count(half.begin(), half.end(), 1) / 10000.0;
  EXPECT_GE(frac, 0.47);
  EXPECT_LE(frac, 0.53);
  EXPECT_THROW(ablation_mask(3, 1.5, rng), ValueError);
  EXPECT_THROW(ablation_mask(3, -0.1, rng), ValueError);
}

TEST(Ablation, ReferencePoints) {
  std::mt19937_64 rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 500; ++i) pts.emplace_back(i + 1.0, -2.0, 3.0);
  const auto same = ablate_reference(pts, 0.0, rng);
  EXPECT_EQ(same, pts);
  for (const Vec3& p : ablate_reference(pts, 1.0, rng)) EXPECT_EQ(p, Vec3::Zero());
  const auto mixed = ablate_reference(pts, 0.3, rng);
  int cleared = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (mixed[i] == Vec3::Zero()) {
      ++cleared;
    } else {
      EXPECT_EQ(mixed[i], pts[i]);
    }
  }
  EXPECT_GT(cleared, 100);
  EXPECT_LT(cleared, 200);
}

TEST(TrainConfig, ValidationNamesField) {
  auto expect_field = [](TrainConfig c, const std::string& field) {
    try {
      c.validate();
      ADD_FAILURE() << "no error for " << field;
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("train." + field), std::string::npos) << e.what();
    }
  };
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.iterations = 0;
  expect_field(c, "iterations");
  c = {};
  c.samples_per_ray = 1;
  expect_field(c, "samples_per_ray");
  c = {};
  c.learning_rate = -1;
  expect_field(c, "learning_rate");
  c = {};
  c.optimizer = "lbfgs";
  expect_field(c, "optimizer");
  c = {};
  c.p_clear = 2;
  expect_field(c, "p_clear");
  c = {};
  c.weights.eikonal = -0.1;
  expect_field(c, "weights.eikonal");
  c = {};
  c.holdout_offset = 8;
  expect_field(c, "holdout_offset");
  c = {};
  c.auto_bounds = false;
  c.near = 2;
  c.far = 1;
  expect_field(c, "near");
}

TEST(TrainFrames, PartitionFrames) {
  const TrainConfig c;
  const auto tr = training_frames(8, c);
  const auto ho = heldout_frames(8, c);
  EXPECT_EQ(ho, std::vector<int>{4});
  EXPECT_EQ(tr.size(), 7u);
  EXPECT_EQ(std::find(tr.begin(), tr.end(), 4), tr.end());
  EXPECT_EQ(heldout_frames(20, c), (std::vector<int>{4, 12}));
}

TEST(Train, RejectsMismatchedDenseFields) {
  const Scene s = small_scene(0.1);
  auto fields = zero_fields(s);
  fields.pop_back();
  EXPECT_THROW(train(s, fields, small_config(1), small_arch()), ValueError);
  fields = zero_fields(s);
  fields[2] = Image(5, 5, 2);
  EXPECT_THROW(train(s, fields, small_config(1), small_arch()), ValueError);
}

TEST(Train, SameSeedSameHistory) {
  const Scene s = small_scene(0.1);
  const auto fields = zero_fields(s);
  const auto a = train(s, fields, small_config(15), small_arch());
  const auto b = train(s, fields, small_config(15), small_arch());
  ASSERT_EQ(a.history.size(), 15u);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].total, b.history[i].total);
    EXPECT_EQ(a.history[i].color, b.history[i].color);
  }
  for (const auto& name : a.bundle.params.names()) {
    const auto x = a.bundle.params.value(name).data(), y = b.bundle.params.value(name).data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << name;
  }
  EXPECT_EQ(history_csv(a.history), history_csv(b.history));
  TrainConfig other = small_config(15);
  other.seed = 4;
  const auto c = train(s, fields, other, small_arch());
  EXPECT_NE(c.history.back().total, a.history.back().total);
}

TEST(Train, FlatSceneColorLossDecreases) {
  const Scene s = small_scene(0.0);
  const int iters = 200;
  TrainConfig cfg = small_config(iters);
  cfg.learning_rate = 2e-3;
  const auto r = train(s, zero_fields(s), cfg, small_arch());
  ASSERT_EQ(r.history.size(), static_cast<std::size_t>(iters));
  std::vector<double> first, last;
  for (int i = 0; i < iters / 10; ++i) {
    first.push_back(r.history[i].color);
    last.push_back(r.history[iters - 1 - i].color);
  }
  EXPECT_LT(median(last), median(first));
  for (const auto& h : r.history) EXPECT_TRUE(std::isfinite(h.total));
}

TEST(Train, NonFiniteLossNamesTerm) {
  const Scene s = small_scene(0.1);
  auto fields = zero_fields(s);
  for (auto& f : fields) std::fill(f.data.begin(), f.data.end(), std::numeric_limits<double>::quiet_NaN());
  try {
    train(s, fields, small_config(3), small_arch());
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("color"), std::string::npos) << e.what();
  }
}

TEST(Train, HistoryCsvHeader) {
  std::vector<LossRecord> h(2);
  h[1].iteration = 1;
  h[1].total = 0.5;
  const std::string csv = history_csv(h);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,total,color,depth,eikonal,sdf_depth");
  EXPECT_NE(csv.find("\n1,0.5,0,0,0,0\n"), std::string::npos);
}

TEST(Train, CalibrationBoundsForegroundInUnitSphere) {
  const Scene s = small_scene(0.1);
  const SceneCalibration cal = calibrate_scene(s);
  for (const auto& f : s.frames)
    for (const Vec3& p : depth_to_pointcloud(f, s.intrinsics)) EXPECT_LE(cal.normalization.apply(p).norm(), 1.0 + 1e-12);
}
