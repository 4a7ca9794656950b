#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <sstream>
#include <string>

#include "tissuedef/error.hpp"
#include "tissuedef/fs_util.hpp"
#include "tissuedef/image.hpp"

namespace tissuedef {

namespace fs = std::filesystem;

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(data.begin(), data.end(), [](std::uint8_t v) { return v != 0; }));
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::vector<std::uint8_t> read_png_bytes(const fs::path& path, int& height, int& width, int& channels) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("malformed PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  std::vector<png_bytep> rows(height);
  for (int r = 0; r < height; ++r) rows[r] = pixels.data() + r * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  return pixels;
}

void write_png_bytes(const fs::path& path, const std::vector<std::uint8_t>& pixels, int height, int width,
                     int channels) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    FilePtr file(std::fopen(tmp.string().c_str(), "wb"));
    if (!file) throw IoError("cannot open " + tmp.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw IoError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw IoError("failed writing PNG " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < height; ++r) {
      png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width * channels));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  fs::rename(tmp, path);
}

}  // namespace

Image read_png(const fs::path& path) {
  int h = 0, w = 0, c = 0;
  auto bytes = read_png_bytes(path, h, w, c);
  Image img(h, w, c);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_png(const Image& image, const fs::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ValueError("PNG output needs 1 or 3 channels");
  std::vector<std::uint8_t> bytes(image.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0, 1.0) * 255.0));
  }
  write_png_bytes(path, bytes, image.height, image.width, image.channels);
}

Mask read_mask_png(const fs::path& path) {
  int h = 0, w = 0, c = 0;
  auto bytes = read_png_bytes(path, h, w, c);
  Mask m(h, w, false);
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) m.set(r, col, bytes[(static_cast<std::size_t>(r) * w + col) * c] >= 128);
  }
  return m;
}

void write_mask_png(const Mask& mask, const fs::path& path) {
  std::vector<std::uint8_t> bytes(mask.data.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = mask.data[i] ? 255 : 0;
  write_png_bytes(path, bytes, mask.height, mask.width, 1);
}

Image read_pfm(const fs::path& path) {
  const std::string raw = read_file(path);
  std::istringstream in(raw);
  std::string magic;
  int width = 0, height = 0;
  double scale = 0.0;
  if (!(in >> magic >> width >> height >> scale)) throw FormatError("PFM " + path.string() + ": bad header");
  int channels = 0;
  if (magic == "Pf") {
    channels = 1;
  } else if (magic == "PF") {
    channels = 3;
  } else {
    throw FormatError("PFM " + path.string() + ": unknown magic '" + magic + "'", 1);
  }
  if (width <= 0 || height <= 0 || scale == 0.0) throw FormatError("PFM " + path.string() + ": bad header values");
  if (scale > 0) throw FormatError("PFM " + path.string() + ": big-endian files are not supported");
  in.get();  // single whitespace after the scale
  const std::size_t offset = static_cast<std::size_t>(in.tellg());
  const std::size_t count = static_cast<std::size_t>(width) * height * channels;
  if (raw.size() < offset + count * sizeof(float)) throw FormatError("PFM " + path.string() + ": truncated data");
  std::vector<float> values(count);
  std::memcpy(values.data(), raw.data() + offset, count * sizeof(float));
  Image img(height, width, channels);
  for (int r = 0; r < height; ++r) {
    const int src_row = height - 1 - r;
    for (int c = 0; c < width; ++c) {
      for (int ch = 0; ch < channels; ++ch) {
        img.at(r, c, ch) = values[(static_cast<std::size_t>(src_row) * width + c) * channels + ch];
      }
    }
  }
  return img;
}

void write_pfm(const Image& image, const fs::path& path) {
  if (image.channels != 1 && image.channels != 3) throw ValueError("PFM output needs 1 or 3 channels");
  std::string out = (image.channels == 1 ? "Pf\n" : "PF\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n-1.0\n";
  std::vector<float> values(image.data.size());
  for (int r = 0; r < image.height; ++r) {
    const int dst_row = image.height - 1 - r;
    for (int c = 0; c < image.width; ++c) {
      for (int ch = 0; ch < image.channels; ++ch) {
        values[(static_cast<std::size_t>(dst_row) * image.width + c) * image.channels + ch] =
            static_cast<float>(image.at(r, c, ch));
      }
    }
  }
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(float));
  write_file_atomic(path, out);
}

}  // namespace tissuedef
