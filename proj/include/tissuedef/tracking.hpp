#pragma once

#include <filesystem>
#include <vector>

#include <nlohmann/json.hpp>

#include "tissuedef/camera.hpp"
#include "tissuedef/image.hpp"

namespace tissuedef {

inline constexpr int kTrackFormatVersion = 1;

/// Uniform Hg x Wg keypoint lattice at cell centres of an H x W image.
struct KeypointGrid {
  int grid_height = 0;
  int grid_width = 0;
  int image_height = 0;
  int image_width = 0;
  std::vector<Vec2> positions;  ///< row-major over (i, j); (u, v) pixel coordinates

  const Vec2& at(int i, int j) const { return positions[static_cast<std::size_t>(i) * grid_width + j]; }
};

/// position(i, j) = ((j + 0.5) * W / Wg, (i + 0.5) * H / Hg).
KeypointGrid sample_grid(int height, int width, int grid_height, int grid_width);

/// Tracked keypoint positions over T frames.
struct TrackGrid {
  int frames = 0;
  int grid_height = 0;
  int grid_width = 0;
  int image_height = 0;
  int image_width = 0;
  std::vector<Vec2> points;            ///< T x Hg x Wg
  std::vector<std::uint8_t> visible;   ///< T x Hg x Wg

  std::size_t index(int t, int i, int j) const {
    return (static_cast<std::size_t>(t) * grid_height + i) * grid_width + j;
  }
  Vec2& point(int t, int i, int j) { return points[index(t, i, j)]; }
  const Vec2& point(int t, int i, int j) const { return points[index(t, i, j)]; }
  bool is_visible(int t, int i, int j) const { return visible[index(t, i, j)] != 0; }

  /// Checks sizes, finiteness, frame-0 agreement with the keypoint grid and
  /// that visible points lie inside the image.
  void validate() const;
};

nlohmann::json tracks_to_json(const TrackGrid& tracks);
TrackGrid tracks_from_json(const nlohmann::json& doc);
void save_tracks(const TrackGrid& tracks, const std::filesystem::path& path);
TrackGrid load_tracks(const std::filesystem::path& path);

/// Per-frame Hg x Wg x 2 displacement lattices relative to frame 0. Occluded
/// points hold their last visible displacement.
std::vector<Image> to_displacements(const TrackGrid& tracks);

/// Precomputed bilinear taps from an Hg x Wg lattice to an H x W image.
///
/// Target pixel c maps to the normalised coordinate g = 2c/W - 1 in [-1, 1),
/// which is un-normalised onto the lattice as j = ((g + 1) * Wg - 1) / 2 and
/// clamped to [0, Wg - 1]. Lattice values are reproduced exactly at the
/// keypoint positions of `sample_grid`.
class SamplingGrid {
 public:
  SamplingGrid(int grid_height, int grid_width, int height, int width);

  /// Applies the same taps to any lattice frame.
  Image apply(const Image& lattice) const;
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  struct Tap {
    int lo, hi;
    double w_hi;
  };
  int grid_height_, grid_width_, height_, width_;
  std::vector<Tap> row_taps_, col_taps_;
};

/// Lattice coordinate of continuous pixel coordinate `x` along an axis of
/// `size` pixels covered by `grid_size` lattice cells (unclamped).
double lattice_coordinate(double x, int size, int grid_size);

/// Bilinear value of a lattice at continuous pixel coordinates, clamped to the edges.
Vec2 sample_lattice(const Image& lattice, double u, double v, int height, int width);

/// Densifies a single lattice frame to H x W x 2.
Image densify(const Image& lattice, int height, int width);
/// Densifies every frame with one shared sampling grid.
std::vector<Image> densify_all(const std::vector<Image>& lattices, int height, int width);

/// Bilinear lookup of a dense H x W x C field at continuous pixel (u, v); out-of-range coordinates clamp.
Vec2 sample_field(const Image& field, double u, double v);

}  // namespace tissuedef
