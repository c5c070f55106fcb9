#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace beds {

// 8-bit RGB raster, row-major interleaved triples.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height * 3

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t* px(int x, int y) { return &data[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &data[(static_cast<std::size_t>(y) * width + x) * 3];
  }
  bool operator==(const RgbImage&) const = default;
};

// {0,1} raster sharing dimensions with its source image.
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // width * height, values in {0,1}

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool operator==(const BinaryMask&) const = default;
};

// PNG I/O. Images are 8-bit RGB; masks are 8-bit grayscale with foreground
// 255 and background 0, thresholded at 128 on load.
RgbImage load_image(const std::string& path);
void save_image(const RgbImage& image, const std::string& path);
BinaryMask load_mask(const std::string& path);
void save_mask(const BinaryMask& mask, const std::string& path);

}  // namespace beds
