#include "tissuedef/config.hpp"

#include <set>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tissuedef {

namespace {

// Reads the members of one JSON object, tracking which keys were consumed.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    const json& v = obj_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw 0;
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw 0;
        if constexpr (std::is_unsigned_v<T>) {
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) throw 0;
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw 0;
      } else {
        if (!v.is_string()) throw 0;
      }
      out = v.get<T>();
    } catch (...) {
      throw ConfigError(path_ + key + ": wrong type");
    }
  }

  void read_path(const char* key, fs::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  Section child(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    return Section(obj_.contains(key) ? obj_.at(key) : kEmpty, path_ + key + ".");
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.count(k)) throw ConfigError(path_ + k + ": unknown field");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_.substr(0, path_.size() - 1); }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig config_from_json(const json& doc) {
  RunConfig c;
  Section root(doc, "");
  int version = kConfigFormatVersion;
  root.read("format_version", version);
  if (version != kConfigFormatVersion) throw ConfigError("format_version: unsupported value " + std::to_string(version));
  std::uint64_t seed = 0;
  root.read("seed", seed);
  if (doc.contains("seed")) c.seed = seed;
  root.read_path("output", c.output);
  root.read_path("scene", c.scene);
  root.read("tracks", c.tracks);
  root.read_path("checkpoint", c.checkpoint);
  {
    auto s = root.child("grid");
    s.read("height", c.grid_height);
    s.read("width", c.grid_width);
    s.finish();
  }
  {
    auto s = root.child("image");
    s.read("height", c.image_height);
    s.read("width", c.image_width);
    s.finish();
  }
  {
    auto s = root.child("synthetic");
    auto& y = c.synthetic;
    s.read("base_depth", y.base_depth);
    s.read("amplitude", y.amplitude);
    s.read("sigma", y.sigma);
    s.read("center_x", y.center_x);
    s.read("center_y", y.center_y);
    s.read("frames", y.frames);
    s.read("checker_size", y.checker_size);
    s.read("checker_contrast", y.checker_contrast);
    s.read("occluder", y.occluder);
    s.read("border", y.border);
    s.finish();
  }
  {
    auto s = root.child("train");
    auto& t = c.train;
    s.read("iterations", t.iterations);
    s.read("rays_per_batch", t.rays_per_batch);
    s.read("samples_per_ray", t.samples_per_ray);
    s.read("auto_bounds", t.auto_bounds);
    s.read("near", t.near);
    s.read("far", t.far);
    s.read("bounds_margin", t.bounds_margin);
    s.read("learning_rate", t.learning_rate);
    s.read("lr_decay", t.lr_decay);
    s.read("optimizer", t.optimizer);
    s.read("eikonal_points", t.eikonal_points);
    s.read("p_clear", t.p_clear);
    s.read("track_conditioning", t.track_conditioning);
    s.read("holdout_period", t.holdout_period);
    s.read("holdout_offset", t.holdout_offset);
    auto w = s.child("weights");
    w.read("color", t.weights.color);
    w.read("depth", t.weights.depth);
    w.read("eikonal", t.weights.eikonal);
    w.read("sdf_depth", t.weights.sdf_depth);
    w.finish();
    s.finish();
  }
  {
    auto s = root.child("arch");
    auto& a = c.arch;
    s.read("position_frequencies", a.position.frequencies);
    s.read("time_frequencies", a.time.frequencies);
    s.read("deform_width", a.deform_width);
    s.read("deform_layers", a.deform_layers);
    s.read("sdf_width", a.sdf_width);
    s.read("sdf_layers", a.sdf_layers);
    s.read("sdf_skip", a.sdf_skip);
    s.read("feature_dim", a.feature_dim);
    s.read("radiance_width", a.radiance_width);
    s.read("radiance_layers", a.radiance_layers);
    s.read("sdf_beta", a.sdf_beta);
    s.read("deform_beta", a.deform_beta);
    s.read("radiance_beta", a.radiance_beta);
    s.read("init_radius", a.init_radius);
    s.read("init_sharpness", a.init_sharpness);
    s.finish();
  }
  {
    auto s = root.child("mesh");
    s.read("resolution", c.mesh_resolution);
    s.finish();
  }
  {
    auto s = root.child("visualize");
    s.read("frame", c.visualize_frame);
    s.finish();
  }
  root.finish();
  if (c.seed) {
    c.train.seed = *c.seed;
    c.synthetic.texture_seed = *c.seed;
  }
  return c;
}

json config_to_json(const RunConfig& c) {
  const auto& y = c.synthetic;
  const auto& t = c.train;
  const auto& a = c.arch;
  json doc = {
      {"format_version", kConfigFormatVersion},
      {"output", c.output.string()},
      {"scene", c.scene.string()},
      {"tracks", c.tracks},
      {"checkpoint", c.checkpoint.string()},
      {"grid", {{"height", c.grid_height}, {"width", c.grid_width}}},
      {"image", {{"height", c.image_height}, {"width", c.image_width}}},
      {"synthetic",
       {{"base_depth", y.base_depth},
        {"amplitude", y.amplitude},
        {"sigma", y.sigma},
        {"center_x", y.center_x},
        {"center_y", y.center_y},
        {"frames", y.frames},
        {"checker_size", y.checker_size},
        {"checker_contrast", y.checker_contrast},
        {"occluder", y.occluder},
        {"border", y.border}}},
      {"train",
       {{"iterations", t.iterations},
        {"rays_per_batch", t.rays_per_batch},
        {"samples_per_ray", t.samples_per_ray},
        {"auto_bounds", t.auto_bounds},
        {"near", t.near},
        {"far", t.far},
        {"bounds_margin", t.bounds_margin},
        {"learning_rate", t.learning_rate},
        {"lr_decay", t.lr_decay},
        {"optimizer", t.optimizer},
        {"eikonal_points", t.eikonal_points},
        {"p_clear", t.p_clear},
        {"track_conditioning", t.track_conditioning},
        {"holdout_period", t.holdout_period},
        {"holdout_offset", t.holdout_offset},
        {"weights",
         {{"color", t.weights.color},
          {"depth", t.weights.depth},
          {"eikonal", t.weights.eikonal},
          {"sdf_depth", t.weights.sdf_depth}}}}},
      {"arch",
       {{"position_frequencies", a.position.frequencies},
        {"time_frequencies", a.time.frequencies},
        {"deform_width", a.deform_width},
        {"deform_layers", a.deform_layers},
        {"sdf_width", a.sdf_width},
        {"sdf_layers", a.sdf_layers},
        {"sdf_skip", a.sdf_skip},
        {"feature_dim", a.feature_dim},
        {"radiance_width", a.radiance_width},
        {"radiance_layers", a.radiance_layers},
        {"sdf_beta", a.sdf_beta},
        {"deform_beta", a.deform_beta},
        {"radiance_beta", a.radiance_beta},
        {"init_radius", a.init_radius},
        {"init_sharpness", a.init_sharpness}}},
      {"mesh", {{"resolution", c.mesh_resolution}}},
      {"visualize", {{"frame", c.visualize_frame}}},
  };
  if (c.seed) doc["seed"] = *c.seed;
  return doc;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  return config_from_json(doc);
}

std::uint64_t RunConfig::required_seed() const {
  if (!seed) throw ConfigError("seed: required (set \"seed\" in the config or pass --seed)");
  return *seed;
}

void RunConfig::validate() const {
  required_seed();
  if (output.empty()) throw ConfigError("output: must not be empty");
  if (tracks.empty()) throw ConfigError("tracks: must be \"oracle\" or a path");
  if (grid_height < 2 || grid_height > image_height) throw ConfigError("grid.height: must lie in [2, image.height]");
  if (grid_width < 2 || grid_width > image_width) throw ConfigError("grid.width: must lie in [2, image.width]");
  if (image_height < 11 || image_width < 11) throw ConfigError("image: height and width must be >= 11");
  const auto& y = synthetic;
  if (!(y.sigma > 0)) throw ConfigError("synthetic.sigma: must be positive");
  if (!(y.amplitude >= 0)) throw ConfigError("synthetic.amplitude: must be >= 0");
  if (!(y.base_depth > 0)) throw ConfigError("synthetic.base_depth: must be positive");
  if (!(y.amplitude < y.base_depth)) throw ConfigError("synthetic.amplitude: must be below base_depth");
  if (y.frames < 2) throw ConfigError("synthetic.frames: must be >= 2");
  if (!(y.checker_size > 0)) throw ConfigError("synthetic.checker_size: must be positive");
  if (!(y.checker_contrast >= 0 && y.checker_contrast <= 0.25)) {
    throw ConfigError("synthetic.checker_contrast: must lie in [0, 0.25]");
  }
  if (y.border < 0) throw ConfigError("synthetic.border: must be >= 0");
  train.validate();
  try {
    FieldArchitecture a = arch;
    a.calibration.intrinsics = default_synthetic_intrinsics(image_height, image_width);
    a.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(e.what()).replace(0, 4, "arch"));
  }
  if (mesh_resolution < 8) throw ConfigError("mesh.resolution: must be >= 8");
  if (visualize_frame < -1) throw ConfigError("visualize.frame: must be >= 0 (or -1 for the first held-out frame)");
}

void RunConfig::check_paths(const std::string& command) const {
  auto need = [](const fs::path& p, const char* field) {
    if (!fs::exists(p)) throw ConfigError(std::string(field) + ": path does not exist: " + p.string());
  };
  if (command == "densify") need(tracks_path(), "tracks");
  if (command == "train" || command == "eval" || command == "mesh" || command == "visualize") {
    need(scene_dir(), "scene");
    if (!fs::exists(dense_dir())) need(tracks_path(), "tracks");
  }
  if (command == "eval" || command == "mesh" || command == "visualize") need(checkpoint_dir(), "checkpoint");
}

}  // namespace tissuedef
