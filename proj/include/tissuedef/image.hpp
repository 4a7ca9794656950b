#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace tissuedef {

/// Row-major multi-channel image of doubles; pixel (row, col) holds
/// `channels` consecutive values.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t index(int row, int col, int ch = 0) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  double& at(int row, int col, int ch = 0) { return data[index(row, col, ch)]; }
  double at(int row, int col, int ch = 0) const { return data[index(row, col, ch)]; }
  bool same_size(const Image& o) const { return height == o.height && width == o.width; }
};

/// Per-pixel validity flags (true = foreground / valid).
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w, bool fill) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

  bool at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col] != 0; }
  void set(int row, int col, bool v) { data[static_cast<std::size_t>(row) * width + col] = v ? 1 : 0; }
  std::size_t count() const;
};

/// 8-bit PNG with 1 (grey) or 3 (RGB) channels; values are mapped to [0,1].
Image read_png(const std::filesystem::path& path);
/// Values are clamped to [0,1] and rounded to 8 bits.
void write_png(const Image& image, const std::filesystem::path& path);

Mask read_mask_png(const std::filesystem::path& path);
/// 0 = excluded, 255 = foreground.
void write_mask_png(const Mask& mask, const std::filesystem::path& path);

/// Portable float map: "Pf" (1 channel) or "PF" (3 channels), negative scale
/// (little-endian), rows stored bottom to top. Values are stored as float32.
Image read_pfm(const std::filesystem::path& path);
void write_pfm(const Image& image, const std::filesystem::path& path);

}  // namespace tissuedef
