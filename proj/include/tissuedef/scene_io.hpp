#pragma once

#include <filesystem>
#include <vector>

#include "tissuedef/camera.hpp"

namespace tissuedef {

inline constexpr int kSceneFormatVersion = 1;

struct Scene {
  Intrinsics intrinsics;
  std::vector<FrameSample> frames;
};

/// Writes meta.json, rgb/%06d.png, depth/%06d.pfm and mask/%06d.png under `dir`.
void write_scene_files(const Scene& scene, const std::filesystem::path& dir);

/// Loads and validates a scene directory. Mask pixels without valid depth are cleared.
Scene load_scene(const std::filesystem::path& dir);

std::string frame_file_name(int index, const char* extension);

/// gt_deformation/%06d.pfm3 (3-channel PFM).
void write_deformation_fields(const std::vector<Image>& fields, const std::filesystem::path& dir);
std::vector<Image> load_deformation_fields(const std::filesystem::path& dir);

}  // namespace tissuedef
