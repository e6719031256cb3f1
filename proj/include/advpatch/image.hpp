#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advpatch/errors.hpp"
#include "advpatch/rng.hpp"

namespace advpatch {

inline constexpr int kChannels = 3;

// 8-bit RGB raster, row-major, interleaved.
class ImageBuffer {
 public:
  ImageBuffer(int width, int height, std::vector<std::uint8_t> data) : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1) throw InvalidArgument("ImageBuffer: width and height must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * height * kChannels)
      throw InvalidArgument("ImageBuffer: data length must equal width*height*3");
  }

  static ImageBuffer filled(int width, int height, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (width < 1 || height < 1) throw InvalidArgument("ImageBuffer: width and height must be >= 1");
    std::vector<std::uint8_t> data(static_cast<std::size_t>(width) * height * kChannels);
    for (std::size_t i = 0; i < data.size(); i += kChannels) {
      data[i] = r;
      data[i + 1] = g;
      data[i + 2] = b;
    }
    return ImageBuffer(width, height, std::move(data));
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::span<const std::uint8_t> data() const noexcept { return data_; }
  std::span<std::uint8_t> data() noexcept { return data_; }

  std::size_t offset(int x, int y) const noexcept { return (static_cast<std::size_t>(y) * width_ + x) * kChannels; }
  std::uint8_t at(int x, int y, int c) const noexcept { return data_[offset(x, y) + c]; }
  std::uint8_t& at(int x, int y, int c) noexcept { return data_[offset(x, y) + c]; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool empty() const noexcept { return width <= 0 || height <= 0; }
  int right() const noexcept { return x + width; }
  int bottom() const noexcept { return y + height; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

inline PixelRect intersect(const PixelRect& a, const PixelRect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return PixelRect{x0, y0, 0, 0};
  return PixelRect{x0, y0, x1 - x0, y1 - y0};
}

inline PixelRect frame_rect(const ImageBuffer& img) { return PixelRect{0, 0, img.width(), img.height()}; }

// Continuous-valued patch parameters plus the physical size of the printed
// patch. Values are nominally in [0, 255]; operations that mutate values must
// be followed by clip_patch before the patch is rendered.
class Patch {
 public:
  Patch(int width, int height, std::vector<double> values, double physical_width_m, double physical_height_m)
      : width_(width),
        height_(height),
        values_(std::move(values)),
        physical_width_(physical_width_m),
        physical_height_(physical_height_m) {
    if (width < 1 || height < 1) throw InvalidArgument("Patch: width and height must be >= 1");
    if (values_.size() != static_cast<std::size_t>(width) * height * kChannels)
      throw InvalidArgument("Patch: values length must equal width*height*3");
    if (!(physical_width_m > 0.0) || !(physical_height_m > 0.0))
      throw InvalidArgument("Patch: physical dimensions must be strictly positive");
  }

  static Patch constant(int width, int height, double r, double g, double b, double physical_width_m, double physical_height_m) {
    if (width < 1 || height < 1) throw InvalidArgument("Patch: width and height must be >= 1");
    std::vector<double> v(static_cast<std::size_t>(width) * height * kChannels);
    for (std::size_t i = 0; i < v.size(); i += kChannels) {
      v[i] = r;
      v[i + 1] = g;
      v[i + 2] = b;
    }
    return Patch(width, height, std::move(v), physical_width_m, physical_height_m);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  double physical_width() const noexcept { return physical_width_; }
  double physical_height() const noexcept { return physical_height_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  double at(int x, int y, int c) const noexcept { return values_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c]; }

  bool is_clipped() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v >= 0.0 && v <= 255.0; });
  }

  friend bool operator==(const Patch&, const Patch&) = default;

 private:
  int width_;
  int height_;
  std::vector<double> values_;
  double physical_width_;
  double physical_height_;
};

inline constexpr std::uint64_t kPatchInitStream = 0x7061746368696e69ULL;  // "patchini"

inline double clip_value(double v) noexcept { return std::min(255.0, std::max(0.0, v)); }

// Round half away from zero into a byte. Expects v already in [0, 255].
inline std::uint8_t quantize_value(double v) noexcept { return static_cast<std::uint8_t>(std::round(clip_value(v))); }

// Gaussian-noise initialisation: clip(127.5 + 50 z) with z ~ N(0, 1).
inline Patch new_random_patch(std::uint64_t seed, int width, int height, double physical_width_m, double physical_height_m) {
  if (width < 1 || height < 1) throw InvalidArgument("new_random_patch: width and height must be >= 1");
  RngStream rng(seed, kPatchInitStream);
  std::vector<double> v(static_cast<std::size_t>(width) * height * kChannels);
  for (double& x : v) x = clip_value(127.5 + 50.0 * rng.normal());
  return Patch(width, height, std::move(v), physical_width_m, physical_height_m);
}

inline Patch clip_patch(Patch p) {
  for (double& v : p.values()) v = clip_value(v);
  return p;
}

inline ImageBuffer quantize_patch(const Patch& p) {
  std::vector<std::uint8_t> data(p.size());
  auto values = p.values();
  std::transform(values.begin(), values.end(), data.begin(), quantize_value);
  return ImageBuffer(p.width(), p.height(), std::move(data));
}

// Inverse of quantize_patch for 8-bit inputs.
inline Patch patch_from_image(const ImageBuffer& img, double physical_width_m, double physical_height_m) {
  std::vector<double> v(img.data().begin(), img.data().end());
  return Patch(img.width(), img.height(), std::move(v), physical_width_m, physical_height_m);
}

}  // namespace advpatch
