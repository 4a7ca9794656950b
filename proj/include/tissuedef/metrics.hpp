#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tissuedef/camera.hpp"
#include "tissuedef/image.hpp"

namespace tissuedef {

inline constexpr double kPsnrSaturation = 99.0;

/// 10 log10(max^2 / MSE); identical images give kPsnrSaturation.
double psnr(const Image& a, const Image& b, double max_value = 1.0);
/// PSNR over mask-true pixels only.
double psnr_masked(const Image& a, const Image& b, const Mask& mask, double max_value = 1.0);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Mean SSIM over every full Gaussian window position, on the channel-mean grey image.
double ssim(const Image& a, const Image& b, double max_value = 1.0, const SsimOptions& opt = {});

struct DeformationErrors {
  double mse = 0.0;
  double maxse = 0.0;
  std::size_t count = 0;
};

/// e = |pred - gt|^2 per mask-true pixel; (mean e, max e).
DeformationErrors deformation_errors(const Image& pred, const Image& gt, const Mask& mask);

/// A displacement field with an explicit per-pixel validity flag.
struct FlaggedField {
  Image field;  ///< H x W x 3, NaN where invalid
  Mask valid;
};

/// World point at frame t minus world point at the reference frame through
/// the same pixel, valid where both frames are foreground with depth.
std::vector<FlaggedField> gt_deformation_from_depth(const std::vector<FrameSample>& frames, const Intrinsics& intr,
                                                    int reference = 0);

struct FrameMetrics {
  int frame = 0;
  double time = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  double maxse = 0.0;
  std::size_t pixels = 0;
};

struct MetricReport {
  std::string label;
  std::string split = "heldout";
  double psnr = 0.0;   ///< mean over frames
  double ssim = 0.0;   ///< mean over frames
  double deformation_mse = 0.0;    ///< pooled over every evaluated pixel
  double deformation_maxse = 0.0;  ///< global maximum
  std::vector<FrameMetrics> per_frame;

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& doc);
  /// Aligned text table: one row per frame and a summary row.
  std::string table() const;
};

/// Summary fields from the per-frame rows (MSE pooled by pixel count).
void summarize(MetricReport& report);

}  // namespace tissuedef
