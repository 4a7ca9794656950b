#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tissuedef/autodiff.hpp"
#include "tissuedef/camera.hpp"

namespace tissuedef {

struct PositionalEncoding {
  int frequencies = 6;
  bool include_input = true;

  std::size_t output_dim(std::size_t input_dim) const {
    return input_dim * ((include_input ? 1 : 0) + 2 * static_cast<std::size_t>(frequencies));
  }
};

/// [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)].
std::vector<double> encode(std::span<const double> x, const PositionalEncoding& enc);

/// Geometry shared by training and evaluation: how world points map to the
/// unit sphere and how normalised points project into the reference camera.
struct SceneCalibration {
  Intrinsics intrinsics;
  Pose reference_pose;
  SceneNormalization normalization;

  /// Reference-camera pixel of a normalised point; false when behind the camera.
  bool reference_pixel(const Vec3& normalized, Vec2& pixel) const;
};

struct FieldArchitecture {
  PositionalEncoding position{6, true};
  PositionalEncoding time{4, true};
  int deform_width = 64;
  int deform_layers = 4;
  int sdf_width = 64;
  int sdf_layers = 4;
  int sdf_skip = 2;  ///< hidden layer that re-reads the encoded input
  int feature_dim = 32;
  int radiance_width = 64;
  int radiance_layers = 3;
  double sdf_beta = 100.0;
  double deform_beta = 100.0;
  double radiance_beta = 1.0;
  double init_radius = 0.5;
  double init_sharpness = 20.0;
  /// When false the deformation net sees p_hat = 0 (no-tracking baseline).
  bool track_conditioning = true;
  /// Sampling interval along rays, in unit-sphere units, and samples per ray.
  double near = 0.0;
  double far = 2.0;
  int samples = 32;
  SceneCalibration calibration;

  void validate() const;
  nlohmann::json to_json() const;
  static FieldArchitecture from_json(const nlohmann::json& doc);
};

/// Deformation, SDF and radiance networks plus the SDF-to-opacity sharpness.
struct FieldBundle {
  FieldArchitecture arch;
  ParamStore params;

  /// Zero deformation, sphere-like SDF of radius `arch.init_radius`.
  static FieldBundle initialize(const FieldArchitecture& arch, std::uint64_t seed);
  double sharpness() const;
};

/// Writes `params.json` (checkpoint format) and `arch.json` into `dir`.
void save_bundle(const FieldBundle& bundle, const std::filesystem::path& dir);
FieldBundle load_bundle(const std::filesystem::path& dir);

struct DeformationQuery {
  Vec3 x_o = Vec3::Zero();
  Vec2 p_hat = Vec2::Zero();  ///< dense-field displacement in pixels
  double t = 0.0;

  void validate() const;
};

Vec3 deform(const FieldBundle& bundle, const DeformationQuery& q);
/// d(deform)/d(x_o) with p_hat and t fixed.
Mat3 deform_jacobian(const FieldBundle& bundle, const DeformationQuery& q);
/// (I + J) v_o, renormalised.
Vec3 canonical_view(const Vec3& v_o, const Mat3& J);

struct SdfSample {
  double distance = 0.0;
  std::vector<double> feature;
};
SdfSample sdf(const FieldBundle& bundle, const Vec3& x_c);
Vec3 sdf_gradient(const FieldBundle& bundle, const Vec3& x_c);
Vec3 radiance(const FieldBundle& bundle, const Vec3& x_c, const Vec3& v_c, const Vec3& normal,
              std::span<const double> feature);

/// Batched forward evaluation (no gradients kept).
std::vector<double> sdf_batch(const FieldBundle& bundle, std::span<const Vec3> points);
std::vector<Vec3> sdf_gradient_batch(const FieldBundle& bundle, std::span<const Vec3> points);
std::vector<Vec3> deform_batch(const FieldBundle& bundle, std::span<const Vec3> points,
                               std::span<const Vec2> p_hat, double t);

/// A graph value together with forward-mode tangents carried as graph nodes.
/// Tangents may be invalid Vars, meaning identically zero.
struct Dual {
  Var value;
  std::vector<Var> tangents;
};

/// Graph builders shared by the query functions, renderer and trainer.
namespace net {

Dual encode(Graph& g, const Dual& x, const PositionalEncoding& enc);

/// Deformation MLP. `x` [N x 3] with optional tangents, `p_hat` [N x 2] in
/// pixels, `t` [N x 1]. Returns [N x 3].
Dual deform(Graph& g, const FieldArchitecture& arch, const Dual& x, Var p_hat, Var t);
/// SDF MLP, returns [N x (1 + feature_dim)]; column 0 is the distance.
Dual sdf(Graph& g, const FieldArchitecture& arch, const Dual& x);
/// Radiance MLP, returns [N x 3] in [0,1].
Var radiance(Graph& g, const FieldArchitecture& arch, Var x_c, Var v_c, Var normal, Var feature);

/// Constant [1 x 3] unit tangent along axis k.
Var axis(Graph& g, int k);

}  // namespace net

}  // namespace tissuedef
