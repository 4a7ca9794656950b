#include "tissuedef/pipeline.hpp"

#include <cmath>
#include <cstdio>

#include "tissuedef/checkpoint.hpp"
#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"
#include "tissuedef/renderer.hpp"
#include "tissuedef/synthetic.hpp"
#include "tissuedef/tracking.hpp"
#include "tissuedef/trainer.hpp"
#include "tissuedef/visualize.hpp"

namespace fs = std::filesystem;

namespace tissuedef {

ReferenceGrid reference_points(const Scene& scene, const SceneCalibration& cal) {
  const FrameSample& f = scene.frames.at(0);
  ReferenceGrid ref{Image(f.height(), f.width(), 3), Mask(f.height(), f.width(), false)};
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      if (!f.mask.at(r, c)) continue;
      const Vec3 p = cal.normalization.apply(f.pose.apply(backproject(c, r, f.depth.at(r, c), scene.intrinsics)));
      for (int k = 0; k < 3; ++k) ref.points.at(r, c, k) = p[k];
      ref.valid.set(r, c, true);
    }
  }
  return ref;
}

Image predicted_deformation(const FieldBundle& bundle, const ReferenceGrid& ref, const Image* field_ref, double t_ref,
                            const Image* field_t, double t, int iterations) {
  const int H = ref.points.height, W = ref.points.width;
  std::vector<Vec3> x0;
  std::vector<std::size_t> where;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      if (!ref.valid.at(r, c)) continue;
      x0.emplace_back(ref.points.at(r, c, 0), ref.points.at(r, c, 1), ref.points.at(r, c, 2));
      where.push_back(static_cast<std::size_t>(r) * W + c);
    }
  }
  std::vector<Vec2> p(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) p[i] = conditioning(bundle, field_ref, x0[i]);
  const auto d0 = deform_batch(bundle, x0, p, t_ref);
  std::vector<Vec3> canonical(x0.size()), x = x0;
  for (std::size_t i = 0; i < x0.size(); ++i) canonical[i] = x0[i] + d0[i];
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) p[i] = conditioning(bundle, field_t, x[i]);
    const auto d = deform_batch(bundle, x, p, t);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = canonical[i] - d[i];
  }
  Image out(H, W, 3, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Vec3 delta = x[i] - x0[i];
    for (int k = 0; k < 3; ++k) out.data[where[i] * 3 + k] = delta[k];
  }
  return out;
}

Image render_frame(const FieldBundle& bundle, const Scene& scene, int frame, const Image* dense_field) {
  const FrameSample& f = scene.frames.at(frame);
  const auto& norm = bundle.arch.calibration.normalization;
  std::vector<Ray> rays;
  std::vector<std::size_t> where;
  for (int r = 0; r < f.height(); ++r) {
    for (int c = 0; c < f.width(); ++c) {
      if (!f.mask.at(r, c)) continue;
      const Ray w = pixel_ray(scene.intrinsics, f.pose, c, r);
      rays.push_back({norm.apply(w.origin), w.direction});
      where.push_back(static_cast<std::size_t>(r) * f.width() + c);
    }
  }
  const auto results = render_rays(bundle, rays, f.time, dense_field);
  Image out = f.image;
  for (std::size_t i = 0; i < results.size(); ++i)
    for (int k = 0; k < 3; ++k) out.data[where[i] * 3 + k] = results[i].color[k];
  return out;
}

MetricReport evaluate(const FieldBundle& bundle, const Scene& scene, const std::vector<Image>& dense_fields,
                      const std::vector<int>& frames, const std::vector<Image>* gt_deformation) {
  const auto& cal = bundle.arch.calibration;
  const double scale = cal.normalization.scale;
  const ReferenceGrid ref = reference_points(scene, cal);
  std::vector<FlaggedField> proxy;
  if (!gt_deformation) proxy = gt_deformation_from_depth(scene.frames, scene.intrinsics, 0);
  MetricReport rep;
  for (int f : frames) {
    const FrameSample& fr = scene.frames.at(f);
    FrameMetrics m;
    m.frame = f;
    m.time = fr.time;
    const Image rendered = render_frame(bundle, scene, f, &dense_fields.at(f));
    m.psnr = psnr_masked(rendered, fr.image, fr.mask);
    m.ssim = ssim(rendered, fr.image);
    const Image pred =
        predicted_deformation(bundle, ref, &dense_fields.at(0), scene.frames[0].time, &dense_fields.at(f), fr.time);
    Image gt(fr.height(), fr.width(), 3, 0.0);
    Mask mask = ref.valid;
    const Image& src = gt_deformation ? gt_deformation->at(f) : proxy.at(f).field;
    for (int r = 0; r < fr.height(); ++r) {
      for (int c = 0; c < fr.width(); ++c) {
        if (!gt_deformation && !proxy[f].valid.at(r, c)) mask.set(r, c, false);
        if (!mask.at(r, c)) continue;
        for (int k = 0; k < 3; ++k) gt.at(r, c, k) = src.at(r, c, k) * scale;
      }
    }
    const DeformationErrors e = deformation_errors(pred, gt, mask);
    m.mse = e.mse;
    m.maxse = e.maxse;
    m.pixels = e.count;
    rep.per_frame.push_back(m);
  }
  summarize(rep);
  return rep;
}

std::vector<Image> dense_fields_from_tracks(const TrackGrid& tracks, int height, int width) {
  return densify_all(to_displacements(tracks), height, width);
}

std::vector<Image> load_dense_fields(const fs::path& dir) {
  std::vector<Image> out;
  for (int i = 0;; ++i) {
    const fs::path p = dir / frame_file_name(i, "pfm");
    if (!fs::exists(p)) break;
    out.push_back(read_pfm(p));
  }
  if (out.empty()) throw IoError("no dense displacement frames in " + dir.string());
  return out;
}

SynthOutput synthesize(const RunConfig& config) {
  config.validate();
  const BumpScene bump = make_bump_scene(config.synthetic);
  const Intrinsics intr = default_synthetic_intrinsics(config.image_height, config.image_width);
  SyntheticSequence seq = render_synthetic_frames(bump, intr);
  SynthOutput out;
  out.scene.intrinsics = intr;
  std::vector<Pose> poses;
  for (auto& f : seq.frames) poses.push_back(f.pose);
  out.scene.frames = std::move(seq.frames);
  out.gt_deformation = std::move(seq.truth.deformation);
  const KeypointGrid grid = sample_grid(intr.height, intr.width, config.grid_height, config.grid_width);
  out.tracks = oracle_tracks(bump, grid, intr, poses);
  return out;
}

namespace {

Image pad_to_three(const Image& field) {
  if (field.channels == 3) return field;
  Image out(field.height, field.width, 3, 0.0);
  for (int r = 0; r < field.height; ++r)
    for (int c = 0; c < field.width; ++c)
      for (int k = 0; k < std::min(field.channels, 3); ++k) out.at(r, c, k) = field.at(r, c, k);
  return out;
}

std::vector<Image> dense_for(const RunConfig& config, const Scene& scene) {
  std::vector<Image> fields;
  if (fs::exists(config.dense_dir())) {
    fields = load_dense_fields(config.dense_dir());
  } else {
    fields = dense_fields_from_tracks(load_tracks(config.tracks_path()), scene.intrinsics.height, scene.intrinsics.width);
  }
  if (fields.size() != scene.frames.size()) {
    throw ConfigError("tracks: " + std::to_string(fields.size()) + " dense frames for a scene of " +
                      std::to_string(scene.frames.size()) + " frames");
  }
  for (const auto& f : fields) {
    if (f.height != scene.intrinsics.height || f.width != scene.intrinsics.width) {
      throw ConfigError("tracks: dense field size differs from the scene images");
    }
  }
  return fields;
}

const std::vector<Image>* analytic_truth(const RunConfig& config, const Scene& scene, std::vector<Image>& storage) {
  const fs::path dir = config.scene_dir() / "gt_deformation";
  if (!fs::is_directory(dir)) return nullptr;
  storage = load_deformation_fields(dir);
  if (storage.size() != scene.frames.size()) return nullptr;
  return &storage;
}

int visual_frame(const RunConfig& config, int frame_count) {
  if (config.visualize_frame >= 0) {
    if (config.visualize_frame >= frame_count) throw ConfigError("visualize.frame: out of range");
    return config.visualize_frame;
  }
  const auto held = heldout_frames(frame_count, config.train);
  return held.empty() ? frame_count - 1 : held.front();
}

TriangleMesh canonical_mesh(const FieldBundle& bundle, int resolution) {
  return marching_cubes([&](std::span<const Vec3> pts) { return sdf_batch(bundle, pts); }, Box{}, resolution);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

}  // namespace

void cmd_synth(const RunConfig& config, const Logger& log) {
  const SynthOutput s = synthesize(config);
  write_directory_atomic(config.scene_dir(), [&](const fs::path& dir) {
    write_scene_files(s.scene, dir);
    write_deformation_fields(s.gt_deformation, dir / "gt_deformation");
    save_tracks(s.tracks, dir / "tracks.json");
  });
  log("synth: wrote " + std::to_string(s.scene.frames.size()) + " frames to " + config.scene_dir().string());
}

void cmd_densify(const RunConfig& config, const Logger& log) {
  config.validate();
  const TrackGrid tracks = load_tracks(config.tracks_path());
  const auto fields = dense_fields_from_tracks(tracks, config.image_height, config.image_width);
  write_directory_atomic(config.dense_dir(), [&](const fs::path& dir) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      write_pfm(pad_to_three(fields[i]), dir / frame_file_name(static_cast<int>(i), "pfm"));
    }
  });
  log("densify: wrote " + std::to_string(fields.size()) + " frames to " + config.dense_dir().string());
}

void cmd_train(const RunConfig& config, const Logger& log) {
  config.validate();
  const Scene scene = load_scene(config.scene_dir());
  const auto fields = dense_for(config, scene);
  const int every = std::max(1, config.train.iterations / 20);
  const TrainResult res = train(scene, fields, config.train, config.arch, [&](const LossRecord& r) {
    if (r.iteration % every == 0 || r.iteration + 1 == config.train.iterations) {
      log("train: iter " + std::to_string(r.iteration) +
          fmt(" total %.5f color %.5f depth %.5f eikonal %.5f", r.total, r.color, r.depth, r.eikonal) +
          fmt(" sdf_depth %.5f", r.sdf_depth));
    }
  });
  write_directory_atomic(config.checkpoint_dir(), [&](const fs::path& dir) { save_bundle(res.bundle, dir); });
  fs::create_directories(config.output);
  write_file_atomic(config.output / "loss.csv", history_csv(res.history));
  log("train: checkpoint written to " + config.checkpoint_dir().string());
}

MetricReport cmd_eval(const RunConfig& config, const std::string& split, const Logger& log) {
  config.validate();
  const FieldBundle bundle = load_bundle(config.checkpoint_dir());
  const Scene scene = load_scene(config.scene_dir());
  const auto fields = dense_for(config, scene);
  const int T = static_cast<int>(scene.frames.size());
  std::vector<int> frames;
  if (split == "heldout") {
    frames = heldout_frames(T, config.train);
  } else if (split == "train") {
    frames = training_frames(T, config.train);
  } else if (split == "all") {
    for (int i = 0; i < T; ++i) frames.push_back(i);
  } else {
    throw ConfigError("split: must be heldout, train or all");
  }
  if (frames.empty()) throw ConfigError("split: selects no frames");
  std::vector<Image> storage;
  MetricReport rep = evaluate(bundle, scene, fields, frames, analytic_truth(config, scene, storage));
  rep.split = split;
  rep.label = config.arch.track_conditioning && bundle.arch.track_conditioning ? "tracked" : "untracked";
  fs::create_directories(config.output);
  write_file_atomic(config.output / "report.json", rep.to_json().dump(2) + "\n");
  log(rep.table());
  return rep;
}

void cmd_mesh(const RunConfig& config, const Logger& log) {
  config.validate();
  const FieldBundle bundle = load_bundle(config.checkpoint_dir());
  const Scene scene = load_scene(config.scene_dir());
  const auto fields = dense_for(config, scene);
  const int f = visual_frame(config, static_cast<int>(scene.frames.size()));
  const TriangleMesh canonical = canonical_mesh(bundle, config.mesh_resolution);
  const TriangleMesh posed = deform_mesh(canonical, bundle, scene.frames[f].time, &fields[f]);
  write_directory_atomic(config.output / "mesh", [&](const fs::path& dir) {
    export_ply(canonical, dir / "canonical.ply");
    export_ply(posed, dir / ("frame_" + frame_file_name(f, "ply")));
  });
  log("mesh: " + std::to_string(canonical.vertices.size()) + " vertices, " +
      std::to_string(canonical.triangles.size()) + " triangles");
}

void cmd_visualize(const RunConfig& config, const Logger& log) {
  config.validate();
  const FieldBundle bundle = load_bundle(config.checkpoint_dir());
  const Scene scene = load_scene(config.scene_dir());
  const auto fields = dense_for(config, scene);
  const int f = visual_frame(config, static_cast<int>(scene.frames.size()));
  const double t = scene.frames[f].time;

  const ReferenceGrid ref = reference_points(scene, bundle.arch.calibration);
  const Image delta = predicted_deformation(bundle, ref, &fields[0], scene.frames[0].time, &fields[f], t);
  Image posed_points = ref.points;
  for (std::size_t i = 0; i < posed_points.data.size(); ++i) posed_points.data[i] += delta.data[i];
  const FlatField flat = flatten_field(posed_points, delta, ref.valid);
  if (flat.positions.empty()) throw ValueError("visualize: reference frame has no foreground pixels");
  const SpatialIndex index = build_index(flat.positions);

  const TriangleMesh posed = deform_mesh(canonical_mesh(bundle, config.mesh_resolution), bundle, t, &fields[f]);
  const ColorMap cmap = ColorMap::blue_white_red();
  const TriangleMesh colored = colorize(posed, index, flat.vectors, cmap);
  const Image heat = displacement_heatmap(fields[f], nullptr, cmap);

  write_directory_atomic(config.output / "visualize", [&](const fs::path& dir) {
    export_ply(colored, dir / ("frame_" + frame_file_name(f, "ply")));
    write_png(heat, dir / ("heatmap_" + frame_file_name(f, "png")));
    write_pfm(delta, dir / ("deformation_" + frame_file_name(f, "pfm3")));
  });
  log("visualize: frame " + std::to_string(f) + ", " + std::to_string(colored.vertices.size()) + " colored vertices");
}

void cmd_pipeline(const RunConfig& config, const Logger& log) {
  config.validate();
  fs::create_directories(config.output);
  write_file_atomic(config.output / "config.json", config_to_json(config).dump(2) + "\n");
  cmd_synth(config, log);
  cmd_densify(config, log);
  cmd_train(config, log);
  cmd_eval(config, "heldout", log);
  cmd_mesh(config, log);
  cmd_visualize(config, log);
}

}  // namespace tissuedef
