#include <catch_amalgamated.hpp>

#include <filesystem>

#include "advpatch/codec.hpp"
#include "advpatch/image.hpp"

using namespace advpatch;

TEST_CASE("new_random_patch: range, mean, determinism") {
  const Patch p = new_random_patch(7, 512, 512, 1.0, 1.0);
  CHECK(p.width() == 512);
  CHECK(p.height() == 512);
  CHECK(p.is_clipped());
  double sum = 0;
  for (double v : p.values()) sum += v;
  const double mean = sum / static_cast<double>(p.size());
  CHECK(mean >= 117.0);
  CHECK(mean <= 138.0);
  CHECK(new_random_patch(7, 512, 512, 1.0, 1.0) == p);
  CHECK(new_random_patch(8, 512, 512, 1.0, 1.0) != p);
}

TEST_CASE("new_random_patch rejects zero dimensions") {
  CHECK_THROWS_AS(new_random_patch(7, 0, 512, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(new_random_patch(7, 512, 0, 1.0, 1.0), InvalidArgument);
}

TEST_CASE("clip and quantize rules") {
  CHECK(clip_value(-3.2) == 0.0);
  CHECK(clip_value(260.0) == 255.0);
  CHECK(clip_value(128.0) == 128.0);
  CHECK(quantize_value(127.5) == 128);
  CHECK(quantize_value(0.4) == 0);
  CHECK(quantize_value(254.6) == 255);
  CHECK(quantize_value(-7.0) == 0);
  CHECK(quantize_value(300.0) == 255);
}

TEST_CASE("clip_patch is idempotent and bounded") {
  Patch p(2, 1, {-5, 10, 300, 255, 0, 128}, 1, 1);
  CHECK_FALSE(p.is_clipped());
  const Patch c = clip_patch(p);
  CHECK(c.is_clipped());
  CHECK(clip_patch(c) == c);
  CHECK(c.at(0, 0, 0) == 0.0);
  CHECK(c.at(0, 0, 2) == 255.0);
}

TEST_CASE("quantize / patch_from_image round trip") {
  const Patch p = new_random_patch(1, 9, 5, 1, 1);
  const ImageBuffer q = quantize_patch(p);
  CHECK(quantize_patch(patch_from_image(q, 1, 1)) == q);
}

TEST_CASE("ImageBuffer validates its size") {
  CHECK_THROWS_AS(ImageBuffer(2, 2, std::vector<std::uint8_t>(11)), InvalidArgument);
  CHECK_THROWS_AS(Patch(2, 2, std::vector<double>(11), 1, 1), InvalidArgument);
}

TEST_CASE("rect intersection") {
  const PixelRect a{-5, -5, 10, 10}, b{0, 0, 4, 3};
  const PixelRect i = intersect(a, b);
  CHECK(i.x == 0);
  CHECK(i.y == 0);
  CHECK(i.width == 4);
  CHECK(i.height == 3);
  CHECK(intersect(PixelRect{10, 10, 2, 2}, b).empty());
}

TEST_CASE("PNG encode/decode round trip") {
  const ImageBuffer img = quantize_patch(new_random_patch(3, 17, 11, 1, 1));
  const auto bytes = encode_png(img);
  REQUIRE(bytes.size() > 8);
  CHECK(bytes[1] == 'P');
  CHECK(decode_png(bytes) == img);
  const auto path = std::filesystem::temp_directory_path() / "advpatch_test_roundtrip.png";
  write_png_file(path, img);
  CHECK(read_png_file(path) == img);
  std::filesystem::remove(path);
}

TEST_CASE("bad PNG and missing files are validation errors") {
  CHECK_THROWS_AS(decode_png(std::vector<std::uint8_t>{1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(read_png_file("/nonexistent/definitely/missing.png"), ValidationError);
}

TEST_CASE("base64 and sha256 known answers") {
  const std::string s = "hello";
  const std::vector<std::uint8_t> bytes(s.begin(), s.end());
  CHECK(base64_encode(bytes) == "aGVsbG8=");
  CHECK(base64_decode("aGVsbG8=") == bytes);
  CHECK(base64_encode({}) == "");
  CHECK(sha256_hex(bytes) == "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824");
}
