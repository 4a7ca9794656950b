#include "tissuedef/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"

namespace tissuedef {

KeypointGrid sample_grid(int height, int width, int grid_height, int grid_width) {
  if (grid_height < 2 || grid_width < 2 || grid_height > height || grid_width > width) {
    throw ValueError("sample_grid: need 2 <= Hg <= H and 2 <= Wg <= W, got " + std::to_string(grid_height) + "x" +
                     std::to_string(grid_width) + " for " + std::to_string(height) + "x" + std::to_string(width));
  }
  KeypointGrid g{grid_height, grid_width, height, width, {}};
  g.positions.reserve(static_cast<std::size_t>(grid_height) * grid_width);
  for (int i = 0; i < grid_height; ++i) {
    for (int j = 0; j < grid_width; ++j) {
      g.positions.emplace_back((j + 0.5) * width / grid_width, (i + 0.5) * height / grid_height);
    }
  }
  return g;
}

void TrackGrid::validate() const {
  if (frames < 1) throw ValueError("tracks: need at least one frame");
  const std::size_t n = static_cast<std::size_t>(frames) * grid_height * grid_width;
  if (points.size() != n || visible.size() != n) throw ValueError("tracks: array sizes do not match T x Hg x Wg");
  const KeypointGrid grid = sample_grid(image_height, image_width, grid_height, grid_width);
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < grid_height; ++i) {
      for (int j = 0; j < grid_width; ++j) {
        const Vec2& p = point(t, i, j);
        if (!p.allFinite()) throw ValueError("tracks: non-finite coordinate at frame " + std::to_string(t));
        if (t == 0 && (p - grid.at(i, j)).cwiseAbs().maxCoeff() > 1e-9) {
          throw ValueError("tracks: frame 0 point (" + std::to_string(i) + ", " + std::to_string(j) +
                           ") differs from the keypoint grid");
        }
        if (is_visible(t, i, j) && (p.x() < -0.5 || p.y() < -0.5 || p.x() > image_width - 0.5 ||
                                    p.y() > image_height - 0.5)) {
          throw ValueError("tracks: visible point outside the image at frame " + std::to_string(t));
        }
      }
    }
  }
}

nlohmann::json tracks_to_json(const TrackGrid& tracks) {
  nlohmann::json doc;
  doc["format_version"] = kTrackFormatVersion;
  doc["Hg"] = tracks.grid_height;
  doc["Wg"] = tracks.grid_width;
  doc["T"] = tracks.frames;
  doc["image"] = {{"H", tracks.image_height}, {"W", tracks.image_width}};
  nlohmann::json points = nlohmann::json::array();
  nlohmann::json visible = nlohmann::json::array();
  for (int t = 0; t < tracks.frames; ++t) {
    nlohmann::json pf = nlohmann::json::array(), vf = nlohmann::json::array();
    for (int i = 0; i < tracks.grid_height; ++i) {
      nlohmann::json pr = nlohmann::json::array(), vr = nlohmann::json::array();
      for (int j = 0; j < tracks.grid_width; ++j) {
        const Vec2& p = tracks.point(t, i, j);
        pr.push_back({p.x(), p.y()});
        vr.push_back(tracks.is_visible(t, i, j));
      }
      pf.push_back(std::move(pr));
      vf.push_back(std::move(vr));
    }
    points.push_back(std::move(pf));
    visible.push_back(std::move(vf));
  }
  doc["points"] = std::move(points);
  doc["visible"] = std::move(visible);
  return doc;
}

namespace {

const nlohmann::json& field(const nlohmann::json& doc, const char* name) {
  if (!doc.contains(name)) throw FormatError(std::string("track file: missing field '") + name + "'");
  return doc[name];
}

int int_field(const nlohmann::json& doc, const char* name) {
  const auto& v = field(doc, name);
  if (!v.is_number_integer()) throw FormatError(std::string("track file: field '") + name + "' must be an integer");
  return v.get<int>();
}

void expect_array(const nlohmann::json& v, std::size_t n, const std::string& what) {
  if (!v.is_array() || v.size() != n) {
    throw FormatError("track file: " + what + " must be an array of length " + std::to_string(n));
  }
}

}  // namespace

TrackGrid tracks_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw FormatError("track file: top level must be an object");
  if (int_field(doc, "format_version") != kTrackFormatVersion) throw FormatError("track file: unsupported format_version");
  TrackGrid tr;
  tr.grid_height = int_field(doc, "Hg");
  tr.grid_width = int_field(doc, "Wg");
  tr.frames = int_field(doc, "T");
  const auto& image = field(doc, "image");
  tr.image_height = int_field(image, "H");
  tr.image_width = int_field(image, "W");
  if (tr.frames < 1 || tr.grid_height < 2 || tr.grid_width < 2) throw FormatError("track file: invalid dimensions");
  const auto& points = field(doc, "points");
  const auto& visible = field(doc, "visible");
  expect_array(points, tr.frames, "points");
  expect_array(visible, tr.frames, "visible");
  for (int t = 0; t < tr.frames; ++t) {
    expect_array(points[t], tr.grid_height, "points[" + std::to_string(t) + "]");
    expect_array(visible[t], tr.grid_height, "visible[" + std::to_string(t) + "]");
    for (int i = 0; i < tr.grid_height; ++i) {
      const std::string where = "[" + std::to_string(t) + "][" + std::to_string(i) + "]";
      expect_array(points[t][i], tr.grid_width, "points" + where);
      expect_array(visible[t][i], tr.grid_width, "visible" + where);
      for (int j = 0; j < tr.grid_width; ++j) {
        const auto& p = points[t][i][j];
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
          throw FormatError("track file: points" + where + "[" + std::to_string(j) + "] must be [u, v]");
        }
        const auto& vis = visible[t][i][j];
        if (!vis.is_boolean()) throw FormatError("track file: visible" + where + " entries must be booleans");
        tr.points.emplace_back(p[0].get<double>(), p[1].get<double>());
        tr.visible.push_back(vis.get<bool>() ? 1 : 0);
      }
    }
  }
  try {
    tr.validate();
  } catch (const ValueError& e) {
    throw FormatError(std::string("track file: ") + e.what());
  }
  return tr;
}

void save_tracks(const TrackGrid& tracks, const std::filesystem::path& path) {
  tracks.validate();
  write_file_atomic(path, tracks_to_json(tracks).dump() + "\n");
}

TrackGrid load_tracks(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("track file " + path.string() + ": " + e.what());
  }
  return tracks_from_json(doc);
}

std::vector<Image> to_displacements(const TrackGrid& tracks) {
  std::vector<Image> out;
  out.reserve(tracks.frames);
  for (int t = 0; t < tracks.frames; ++t) {
    Image lattice(tracks.grid_height, tracks.grid_width, 2);
    for (int i = 0; i < tracks.grid_height; ++i) {
      for (int j = 0; j < tracks.grid_width; ++j) {
        if (t == 0) continue;
        if (tracks.is_visible(t, i, j)) {
          const Vec2 d = tracks.point(t, i, j) - tracks.point(0, i, j);
          lattice.at(i, j, 0) = d.x();
          lattice.at(i, j, 1) = d.y();
        } else {
          lattice.at(i, j, 0) = out.back().at(i, j, 0);
          lattice.at(i, j, 1) = out.back().at(i, j, 1);
        }
      }
    }
    out.push_back(std::move(lattice));
  }
  return out;
}

double lattice_coordinate(double x, int size, int grid_size) {
  const double normalized = 2.0 * x / size - 1.0;
  return ((normalized + 1.0) * grid_size - 1.0) / 2.0;
}

namespace {

struct Taps {
  int lo, hi;
  double w_hi;
};

Taps taps_for(double x, int size, int grid_size) {
  const double j = std::clamp(lattice_coordinate(x, size, grid_size), 0.0, static_cast<double>(grid_size - 1));
  const int lo = std::min(static_cast<int>(std::floor(j)), grid_size - 1);
  const int hi = std::min(lo + 1, grid_size - 1);
  return {lo, hi, j - lo};
}

}  // namespace

SamplingGrid::SamplingGrid(int grid_height, int grid_width, int height, int width)
    : grid_height_(grid_height), grid_width_(grid_width), height_(height), width_(width) {
  if (grid_height < 2 || grid_width < 2) throw ValueError("densify: lattice must be at least 2x2");
  if (height < 1 || width < 1) throw ValueError("densify: target size must be positive");
  for (int r = 0; r < height; ++r) {
    const Taps t = taps_for(r, height, grid_height);
    row_taps_.push_back({t.lo, t.hi, t.w_hi});
  }
  for (int c = 0; c < width; ++c) {
    const Taps t = taps_for(c, width, grid_width);
    col_taps_.push_back({t.lo, t.hi, t.w_hi});
  }
}

Image SamplingGrid::apply(const Image& lattice) const {
  if (lattice.height != grid_height_ || lattice.width != grid_width_) {
    throw ShapeError("densify: lattice is " + std::to_string(lattice.height) + "x" + std::to_string(lattice.width) +
                     ", sampling grid expects " + std::to_string(grid_height_) + "x" + std::to_string(grid_width_));
  }
  const int ch = lattice.channels;
  Image out(height_, width_, ch);
  for (int r = 0; r < height_; ++r) {
    const Tap& rt = row_taps_[r];
    for (int c = 0; c < width_; ++c) {
      const Tap& ct = col_taps_[c];
      for (int k = 0; k < ch; ++k) {
        const double top = (1.0 - ct.w_hi) * lattice.at(rt.lo, ct.lo, k) + ct.w_hi * lattice.at(rt.lo, ct.hi, k);
        const double bottom = (1.0 - ct.w_hi) * lattice.at(rt.hi, ct.lo, k) + ct.w_hi * lattice.at(rt.hi, ct.hi, k);
        out.at(r, c, k) = (1.0 - rt.w_hi) * top + rt.w_hi * bottom;
      }
    }
  }
  return out;
}

Vec2 sample_lattice(const Image& lattice, double u, double v, int height, int width) {
  const Taps ct = taps_for(u, width, lattice.width);
  const Taps rt = taps_for(v, height, lattice.height);
  Vec2 out;
  for (int k = 0; k < 2; ++k) {
    const double top = (1.0 - ct.w_hi) * lattice.at(rt.lo, ct.lo, k) + ct.w_hi * lattice.at(rt.lo, ct.hi, k);
    const double bottom = (1.0 - ct.w_hi) * lattice.at(rt.hi, ct.lo, k) + ct.w_hi * lattice.at(rt.hi, ct.hi, k);
    out[k] = (1.0 - rt.w_hi) * top + rt.w_hi * bottom;
  }
  return out;
}

Image densify(const Image& lattice, int height, int width) {
  return SamplingGrid(lattice.height, lattice.width, height, width).apply(lattice);
}

std::vector<Image> densify_all(const std::vector<Image>& lattices, int height, int width) {
  std::vector<Image> out;
  if (lattices.empty()) return out;
  const SamplingGrid grid(lattices.front().height, lattices.front().width, height, width);
  out.reserve(lattices.size());
  for (const Image& l : lattices) out.push_back(grid.apply(l));
  return out;
}

Vec2 sample_field(const Image& field, double u, double v) {
  if (field.channels < 2) throw ShapeError("sample_field: field needs at least 2 channels");
  const double x = std::clamp(u, 0.0, static_cast<double>(field.width - 1));
  const double y = std::clamp(v, 0.0, static_cast<double>(field.height - 1));
  const int c0 = static_cast<int>(std::floor(x)), r0 = static_cast<int>(std::floor(y));
  const int c1 = std::min(c0 + 1, field.width - 1), r1 = std::min(r0 + 1, field.height - 1);
  const double fx = x - c0, fy = y - r0;
  Vec2 out;
  for (int k = 0; k < 2; ++k) {
    const double top = (1.0 - fx) * field.at(r0, c0, k) + fx * field.at(r0, c1, k);
    const double bottom = (1.0 - fx) * field.at(r1, c0, k) + fx * field.at(r1, c1, k);
    out[k] = (1.0 - fy) * top + fy * bottom;
  }
  return out;
}

}  // namespace tissuedef
