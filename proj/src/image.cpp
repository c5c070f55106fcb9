#include "beds/image.hpp"

#include <stdexcept>

#include "beds/png_io.hpp"

namespace beds {

RgbImage load_image(const std::string& path) {
  png::Decoded d = png::decode(path);
  if (d.channels != 3)
    throw std::runtime_error("load_image(" + path + "): expected 3-channel RGB, got " +
                             std::to_string(d.channels) + " channel(s)");
  RgbImage img;
  img.width = d.width;
  img.height = d.height;
  img.data = std::move(d.data);
  return img;
}

void save_image(const RgbImage& image, const std::string& path) {
  if (image.data.size() != image.pixels() * 3)
    throw std::runtime_error("save_image: buffer size does not match dimensions");
  png::encode(path, image.width, image.height, 3, image.data.data());
}

BinaryMask load_mask(const std::string& path) {
  png::Decoded d = png::decode(path);
  if (d.channels != 1)
    throw std::runtime_error("load_mask(" + path + "): expected single-channel grayscale, got " +
                             std::to_string(d.channels) + " channel(s)");
  BinaryMask mask;
  mask.width = d.width;
  mask.height = d.height;
  mask.data.resize(d.data.size());
  for (std::size_t i = 0; i < d.data.size(); ++i) mask.data[i] = d.data[i] >= 128 ? 1 : 0;
  return mask;
}

void save_mask(const BinaryMask& mask, const std::string& path) {
  if (mask.data.size() != mask.pixels())
    throw std::runtime_error("save_mask: buffer size does not match dimensions");
  std::vector<std::uint8_t> gray(mask.data.size());
  for (std::size_t i = 0; i < mask.data.size(); ++i) gray[i] = mask.data[i] ? 255 : 0;
  png::encode(path, mask.width, mask.height, 1, gray.data());
}

}  // namespace beds
