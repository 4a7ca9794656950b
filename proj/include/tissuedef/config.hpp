#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tissuedef/fields.hpp"
#include "tissuedef/synthetic.hpp"
#include "tissuedef/trainer.hpp"

namespace tissuedef {

inline constexpr int kConfigFormatVersion = 1;

/// Everything a CLI run needs. Unset paths default to subdirectories of `output`.
struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::filesystem::path output = "run";
  std::filesystem::path scene;       ///< default <output>/scene
  std::string tracks = "oracle";     ///< "oracle" (<scene>/tracks.json) or a track file
  std::filesystem::path checkpoint;  ///< default <output>/checkpoint
  int grid_height = 16;
  int grid_width = 16;
  int image_height = 64;
  int image_width = 64;
  BumpSceneConfig synthetic;
  TrainConfig train;
  FieldArchitecture arch;
  int mesh_resolution = 64;
  int visualize_frame = -1;  ///< -1: first held-out frame

  std::filesystem::path scene_dir() const { return scene.empty() ? output / "scene" : scene; }
  std::filesystem::path dense_dir() const { return output / "dense"; }
  std::filesystem::path checkpoint_dir() const { return checkpoint.empty() ? output / "checkpoint" : checkpoint; }
  std::filesystem::path tracks_path() const { return tracks == "oracle" ? scene_dir() / "tracks.json" : std::filesystem::path(tracks); }

  /// Value checks; ConfigError messages start with the offending field path.
  void validate() const;
  std::uint64_t required_seed() const;
  /// Checks that the inputs `command` reads exist (ConfigError otherwise).
  void check_paths(const std::string& command) const;
};

/// Parses a config document. Unknown keys and wrongly typed values raise
/// ConfigError with their field path; absent keys keep their defaults.
RunConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace tissuedef
