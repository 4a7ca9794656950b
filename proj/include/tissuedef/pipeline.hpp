#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tissuedef/config.hpp"
#include "tissuedef/fields.hpp"
#include "tissuedef/metrics.hpp"
#include "tissuedef/mesh.hpp"
#include "tissuedef/scene_io.hpp"

namespace tissuedef {

/// Frame-0 surface points (unit-sphere units) behind every foreground reference pixel.
struct ReferenceGrid {
  Image points;  ///< H x W x 3
  Mask valid;
};
ReferenceGrid reference_points(const Scene& scene, const SceneCalibration& calibration);

/// Predicted displacement of each reference point from frame 0 to time t,
/// in unit-sphere units. Both instants are mapped to canonical space and the
/// time-t observation point is recovered by fixed-point iteration.
Image predicted_deformation(const FieldBundle& bundle, const ReferenceGrid& ref, const Image* field_ref,
                            double t_ref, const Image* field_t, double t, int iterations = 10);

/// Renders the mask-true pixels of a frame; other pixels copy the ground truth.
Image render_frame(const FieldBundle& bundle, const Scene& scene, int frame, const Image* dense_field);

/// Metrics on `frames`. `gt_deformation` holds world-unit analytic fields per
/// frame when available; otherwise the depth-difference proxy is used.
MetricReport evaluate(const FieldBundle& bundle, const Scene& scene, const std::vector<Image>& dense_fields,
                      const std::vector<int>& frames, const std::vector<Image>* gt_deformation);

/// Dense H x W x 2 displacement frames from a track file.
std::vector<Image> dense_fields_from_tracks(const TrackGrid& tracks, int height, int width);
std::vector<Image> load_dense_fields(const std::filesystem::path& dir);

using Logger = std::function<void(const std::string&)>;

struct SynthOutput {
  Scene scene;
  std::vector<Image> gt_deformation;
  TrackGrid tracks;
};
SynthOutput synthesize(const RunConfig& config);

void cmd_synth(const RunConfig& config, const Logger& log);
void cmd_densify(const RunConfig& config, const Logger& log);
void cmd_train(const RunConfig& config, const Logger& log);
MetricReport cmd_eval(const RunConfig& config, const std::string& split, const Logger& log);
void cmd_mesh(const RunConfig& config, const Logger& log);
void cmd_visualize(const RunConfig& config, const Logger& log);
void cmd_pipeline(const RunConfig& config, const Logger& log);

}  // namespace tissuedef
