#include "tissuedef/scene_io.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace tissuedef {

std::string frame_file_name(int index, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.%s", index, extension);
  return buf;
}

void write_scene_files(const Scene& scene, const fs::path& dir) {
  scene.intrinsics.validate();
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "mask");
  json meta;
  meta["format_version"] = kSceneFormatVersion;
  const auto& in = scene.intrinsics;
  meta["intrinsics"] = {{"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx}, {"cy", in.cy},
                        {"width", in.width}, {"height", in.height}};
  json frames = json::array();
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const auto& f = scene.frames[i];
    f.validate();
    const auto m = f.pose.to_row_major();
    frames.push_back({{"pose", std::vector<double>(m.begin(), m.end())}, {"time", f.time}});
    const int idx = static_cast<int>(i);
    write_png(f.image, dir / "rgb" / frame_file_name(idx, "png"));
    write_pfm(f.depth, dir / "depth" / frame_file_name(idx, "pfm"));
    write_mask_png(f.mask, dir / "mask" / frame_file_name(idx, "png"));
  }
  meta["frames"] = std::move(frames);
  write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

namespace {

template <typename T>
T field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw FormatError(where + ": missing '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + ": field '" + key + "' has the wrong type");
  }
}

}  // namespace

Scene load_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory not found: " + dir.string());
  json meta;
  try {
    meta = json::parse(read_file(dir / "meta.json"));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("meta.json: ") + e.what());
  }
  const int version = field<int>(meta, "format_version", "meta.json");
  if (version != kSceneFormatVersion) throw FormatError("meta.json: unsupported format_version");
  Scene scene;
  const json& in = meta.contains("intrinsics") ? meta["intrinsics"] : json();
  const std::string iw = "meta.json intrinsics";
  scene.intrinsics.fx = field<double>(in, "fx", iw);
  scene.intrinsics.fy = field<double>(in, "fy", iw);
  scene.intrinsics.cx = field<double>(in, "cx", iw);
  scene.intrinsics.cy = field<double>(in, "cy", iw);
  scene.intrinsics.width = field<int>(in, "width", iw);
  scene.intrinsics.height = field<int>(in, "height", iw);
  scene.intrinsics.validate();
  const json frames = meta.contains("frames") ? meta["frames"] : json();
  if (!frames.is_array() || frames.empty()) throw FormatError("meta.json: 'frames' must be a non-empty array");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const std::string where = "meta.json frames[" + std::to_string(i) + "]";
    const auto pose = field<std::vector<double>>(frames[i], "pose", where);
    if (pose.size() != 16) throw FormatError(where + ": pose needs 16 values");
    FrameSample f;
    f.pose = Pose::from_row_major(pose);
    f.time = field<double>(frames[i], "time", where);
    const int idx = static_cast<int>(i);
    f.image = read_png(dir / "rgb" / frame_file_name(idx, "png"));
    f.depth = read_pfm(dir / "depth" / frame_file_name(idx, "pfm"));
    f.mask = read_mask_png(dir / "mask" / frame_file_name(idx, "png"));
    if (f.image.channels != 3) throw FormatError(where + ": rgb image must have 3 channels");
    if (f.depth.channels != 1) throw FormatError(where + ": depth map must have 1 channel");
    if (!f.image.same_size(f.depth) || f.mask.height != f.image.height || f.mask.width != f.image.width ||
        f.image.height != scene.intrinsics.height || f.image.width != scene.intrinsics.width) {
      throw FormatError(where + ": image, depth and mask sizes must match the intrinsics");
    }
    for (int r = 0; r < f.depth.height; ++r)
      for (int c = 0; c < f.depth.width; ++c)
        if (!(f.depth.at(r, c) > 0.0)) f.mask.set(r, c, false);
    f.validate();
    scene.frames.push_back(std::move(f));
  }
  return scene;
}

void write_deformation_fields(const std::vector<Image>& fields, const fs::path& dir) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    write_pfm(fields[i], dir / frame_file_name(static_cast<int>(i), "pfm3"));
  }
}

std::vector<Image> load_deformation_fields(const fs::path& dir) {
  std::vector<Image> out;
  for (int i = 0;; ++i) {
    const fs::path p = dir / frame_file_name(i, "pfm3");
    if (!fs::exists(p)) break;
    out.push_back(read_pfm(p));
  }
  return out;
}

}  // namespace tissuedef
