#include <doctest.h>

#include <zlib.h>

#include <cstring>

#include "beds/image.hpp"
#include "beds/png_io.hpp"
#include "test_util.hpp"

using namespace beds;

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_be32(out, static_cast<std::uint32_t>(data.size()));
  std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  std::uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(4 + data.size()));
  put_be32(out, crc);
}

// container with arbitrary IHDR properties; IDAT body is a valid empty-ish
// zlib stream since the decoder must reject the header before inflating
std::vector<std::uint8_t> craft_png(int w, int h, int depth, int color_type, int interlace) {
  static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<std::uint8_t> out(sig, sig + 8);
  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, w);
  put_be32(ihdr, h);
  ihdr.push_back(std::uint8_t(depth));
  ihdr.push_back(std::uint8_t(color_type));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(std::uint8_t(interlace));
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", {0x78, 0x9c, 0x03, 0x00, 0x00, 0x00, 0x00, 0x01});
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace

TEST_SUITE("png_io") {

TEST_CASE("1x1 white round trip") {
  testutil::TempDir tmp;
  RgbImage white(1, 1, 255);
  save_image(white, tmp.str("white.png"));
  RgbImage loaded = load_image(tmp.str("white.png"));
  CHECK(loaded.width == 1);
  CHECK(loaded.height == 1);
  CHECK(loaded.data == std::vector<std::uint8_t>{255, 255, 255});
}

TEST_CASE("save/load is pixel-identical for random images") {
  testutil::TempDir tmp;
  for (int trial = 0; trial < 4; ++trial) {
    const RgbImage img = testutil::random_image(37 + trial * 11, 23 + trial * 7, trial);
    save_image(img, tmp.str("t.png"));
    const RgbImage back = load_image(tmp.str("t.png"));
    CHECK(back == img);
  }
}

TEST_CASE("1000x1000 image loads at full resolution") {
  testutil::TempDir tmp;
  const RgbImage img = testutil::random_image(1000, 1000, 99);
  save_image(img, tmp.str("big.png"));
  const RgbImage back = load_image(tmp.str("big.png"));
  CHECK(back.width == 1000);
  CHECK(back.height == 1000);
  CHECK(back.data == img.data);
}

TEST_CASE("mask round trip thresholds at 128") {
  testutil::TempDir tmp;
  std::vector<std::uint8_t> gray = {0, 127, 128, 255};
  png::encode(tmp.str("m.png"), 4, 1, 1, gray.data());
  const BinaryMask m = load_mask(tmp.str("m.png"));
  CHECK(m.data == std::vector<std::uint8_t>{0, 0, 1, 1});

  BinaryMask out(2, 2);
  out.data = {1, 0, 0, 1};
  save_mask(out, tmp.str("m2.png"));
  CHECK(load_mask(tmp.str("m2.png")) == out);
  const png::Decoded raw = png::decode(tmp.str("m2.png"));
  CHECK(raw.channels == 1);
  CHECK(raw.data == std::vector<std::uint8_t>{255, 0, 0, 255});
}

TEST_CASE("decode errors name the offending property") {
  testutil::TempDir tmp;

  auto write = [&](const std::vector<std::uint8_t>& bytes, const std::string& name) {
    std::ofstream out(tmp.str(name), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  };

  write(craft_png(2, 2, 16, 0, 0), "deep.png");
  CHECK_THROWS_WITH_AS(load_image(tmp.str("deep.png")),
                       doctest::Contains("bit depth 16"), std::runtime_error);

  write(craft_png(2, 2, 8, 3, 0), "pal.png");
  CHECK_THROWS_WITH_AS(load_image(tmp.str("pal.png")), doctest::Contains("palette"),
                       std::runtime_error);

  write(craft_png(2, 2, 8, 2, 1), "inter.png");
  CHECK_THROWS_WITH_AS(load_image(tmp.str("inter.png")), doctest::Contains("interlaced"),
                       std::runtime_error);

  CHECK_THROWS_WITH_AS(load_image(tmp.str("nothere.png")), doctest::Contains("cannot open"),
                       std::runtime_error);

  std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  write(junk, "junk.png");
  CHECK_THROWS_WITH_AS(load_image(tmp.str("junk.png")), doctest::Contains("signature"),
                       std::runtime_error);
}

TEST_CASE("channel-count mismatches are named") {
  testutil::TempDir tmp;
  std::vector<std::uint8_t> gray = {7, 8, 9, 10};
  png::encode(tmp.str("gray.png"), 2, 2, 1, gray.data());
  CHECK_THROWS_WITH_AS(load_image(tmp.str("gray.png")),
                       doctest::Contains("expected 3-channel RGB, got 1"), std::runtime_error);

  const RgbImage img = testutil::random_image(3, 3, 1);
  save_image(img, tmp.str("rgb.png"));
  CHECK_THROWS_WITH_AS(load_mask(tmp.str("rgb.png")),
                       doctest::Contains("expected single-channel grayscale, got 3"),
                       std::runtime_error);
}

TEST_CASE("corrupt CRC is rejected") {
  testutil::TempDir tmp;
  const RgbImage img = testutil::random_image(8, 8, 5);
  save_image(img, tmp.str("ok.png"));
  auto bytes = testutil::read_bytes(tmp.str("ok.png"));
  bytes[bytes.size() / 2] ^= 0xff;  // flips a bit inside IDAT
  std::ofstream out(tmp.str("bad.png"), std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  out.close();
  CHECK_THROWS_AS(load_image(tmp.str("bad.png")), std::runtime_error);
}

}  // TEST_SUITE
