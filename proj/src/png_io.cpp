#include "beds/png_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <stdexcept>

namespace beds::png {

namespace {

const std::uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

[[noreturn]] void fail(const std::string& name, const std::string& what) {
  throw std::runtime_error("png decode error (" + name + "): " + what);
}

int paeth(int a, int b, int c) {
  int p = a + b - c;
  int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

std::vector<std::uint8_t> inflate_all(const std::vector<std::uint8_t>& in,
                                      std::size_t expected, const std::string& name) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) fail(name, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = inflate(&zs, Z_FINISH);
  std::size_t produced = out.size() - zs.avail_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected)
    fail(name, "corrupt or truncated IDAT stream");
  return out;
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
  write_be32(out, static_cast<std::uint32_t>(len));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data, data + len);
  std::uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(4 + len));
  write_be32(out, crc);
}

}  // namespace

Decoded decode_bytes(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    fail(name, "not a PNG file (bad signature)");

  Decoded img;
  int bit_depth = 0, color_type = -1;
  std::vector<std::uint8_t> idat;
  bool have_ihdr = false, have_iend = false;

  std::size_t pos = 8;
  while (pos + 12 <= bytes.size() && !have_iend) {
    std::uint32_t len = read_be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) fail(name, "truncated chunk");
    const std::uint8_t* type = &bytes[pos + 4];
    const std::uint8_t* data = &bytes[pos + 8];
    std::uint32_t crc_stored = read_be32(&bytes[pos + 8 + len]);
    std::uint32_t crc_actual = crc32(0, type, 4 + len);
    if (crc_stored != crc_actual) fail(name, "chunk CRC mismatch");

    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(name, "malformed IHDR");
      img.width = static_cast<int>(read_be32(data));
      img.height = static_cast<int>(read_be32(&data[4]));
      bit_depth = data[8];
      color_type = data[9];
      if (img.width < 1 || img.height < 1) fail(name, "nonpositive dimensions");
      if (data[10] != 0) fail(name, "unsupported compression method");
      if (data[11] != 0) fail(name, "unsupported filter method");
      if (data[12] != 0) fail(name, "interlaced images are unsupported");
      if (bit_depth != 8)
        fail(name, "unsupported bit depth " + std::to_string(bit_depth) +
                       " (only 8-bit supported)");
      switch (color_type) {
        case 0: img.channels = 1; break;
        case 2: img.channels = 3; break;
        case 4: img.channels = 2; break;
        case 6: img.channels = 4; break;
        case 3: fail(name, "palette color type is unsupported");
        default: fail(name, "unknown color type " + std::to_string(color_type));
      }
      have_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      if (!have_ihdr) fail(name, "IDAT before IHDR");
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      have_iend = true;
    }
    // ancillary chunks are skipped
    pos += 12 + len;
  }
  if (!have_ihdr) fail(name, "missing IHDR");
  if (!have_iend) fail(name, "missing IEND");
  if (idat.empty()) fail(name, "missing IDAT");

  const int ch = img.channels;
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * ch;
  const std::size_t raw_size = (row_bytes + 1) * img.height;
  std::vector<std::uint8_t> raw = inflate_all(idat, raw_size, name);

  img.data.resize(row_bytes * img.height);
  for (int y = 0; y < img.height; ++y) {
    const std::uint8_t* src = &raw[static_cast<std::size_t>(y) * (row_bytes + 1)];
    std::uint8_t filter = src[0];
    ++src;
    std::uint8_t* dst = &img.data[static_cast<std::size_t>(y) * row_bytes];
    const std::uint8_t* prev =
        y > 0 ? &img.data[static_cast<std::size_t>(y - 1) * row_bytes] : nullptr;
    switch (filter) {
      case 0:
        std::memcpy(dst, src, row_bytes);
        break;
      case 1:
        for (std::size_t i = 0; i < row_bytes; ++i) {
          int left = i >= std::size_t(ch) ? dst[i - ch] : 0;
          dst[i] = std::uint8_t(src[i] + left);
        }
        break;
      case 2:
        for (std::size_t i = 0; i < row_bytes; ++i) {
          int up = prev ? prev[i] : 0;
          dst[i] = std::uint8_t(src[i] + up);
        }
        break;
      case 3:
        for (std::size_t i = 0; i < row_bytes; ++i) {
          int left = i >= std::size_t(ch) ? dst[i - ch] : 0;
          int up = prev ? prev[i] : 0;
          dst[i] = std::uint8_t(src[i] + (left + up) / 2);
        }
        break;
      case 4:
        for (std::size_t i = 0; i < row_bytes; ++i) {
          int left = i >= std::size_t(ch) ? dst[i - ch] : 0;
          int up = prev ? prev[i] : 0;
          int ul = (prev && i >= std::size_t(ch)) ? prev[i - ch] : 0;
          dst[i] = std::uint8_t(src[i] + paeth(left, up, ul));
        }
        break;
      default:
        fail(name, "unknown row filter " + std::to_string(filter));
    }
  }
  return img;
}

Decoded decode(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open file: " + path);
  std::fseek(f, 0, SEEK_END);
  long size = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<std::uint8_t> bytes(size > 0 ? static_cast<std::size_t>(size) : 0);
  if (!bytes.empty() && std::fread(bytes.data(), 1, bytes.size(), f) != bytes.size()) {
    std::fclose(f);
    throw std::runtime_error("cannot read file: " + path);
  }
  std::fclose(f);
  return decode_bytes(bytes, path);
}

std::vector<std::uint8_t> encode_bytes(int width, int height, int channels,
                                       const std::uint8_t* data) {
  if (width < 1 || height < 1) throw std::runtime_error("png encode: empty image");
  int color_type;
  switch (channels) {
    case 1: color_type = 0; break;
    case 3: color_type = 2; break;
    default: throw std::runtime_error("png encode: unsupported channel count");
  }

  const std::size_t row_bytes = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw((row_bytes + 1) * height);
  for (int y = 0; y < height; ++y) {
    std::uint8_t* dst = &raw[static_cast<std::size_t>(y) * (row_bytes + 1)];
    dst[0] = 0;  // filter: none
    std::memcpy(dst + 1, data + static_cast<std::size_t>(y) * row_bytes, row_bytes);
  }

  uLongf comp_bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> comp(comp_bound);
  if (compress2(comp.data(), &comp_bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png encode: deflate failed");
  comp.resize(comp_bound);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kSignature, kSignature + 8);
  std::uint8_t ihdr[13];
  ihdr[0] = std::uint8_t(width >> 24); ihdr[1] = std::uint8_t(width >> 16);
  ihdr[2] = std::uint8_t(width >> 8);  ihdr[3] = std::uint8_t(width);
  ihdr[4] = std::uint8_t(height >> 24); ihdr[5] = std::uint8_t(height >> 16);
  ihdr[6] = std::uint8_t(height >> 8);  ihdr[7] = std::uint8_t(height);
  ihdr[8] = 8;
  ihdr[9] = std::uint8_t(color_type);
  ihdr[10] = ihdr[11] = ihdr[12] = 0;
  append_chunk(out, "IHDR", ihdr, 13);
  append_chunk(out, "IDAT", comp.data(), comp.size());
  append_chunk(out, "IEND", nullptr, 0);
  return out;
}

void encode(const std::string& path, int width, int height, int channels,
            const std::uint8_t* data) {
  std::vector<std::uint8_t> bytes = encode_bytes(width, height, channels, data);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open file for writing: " + path);
  std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (written != bytes.size())
    throw std::runtime_error("short write: " + path);
}

}  // namespace beds::png
