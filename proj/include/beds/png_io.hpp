#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace beds::png {

struct Decoded {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  std::vector<std::uint8_t> data;  // row-major interleaved
};

// Minimal PNG codec over zlib. Supports non-interlaced 8-bit grayscale,
// gray+alpha, RGB and RGBA. Anything else raises std::runtime_error naming
// the offending property.
Decoded decode(const std::string& path);
Decoded decode_bytes(const std::vector<std::uint8_t>& bytes, const std::string& name);

void encode(const std::string& path, int width, int height, int channels,
            const std::uint8_t* data);
std::vector<std::uint8_t> encode_bytes(int width, int height, int channels,
                                       const std::uint8_t* data);

}  // namespace beds::png
