#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "advpatch/errors.hpp"
#include "advpatch/image.hpp"
#include "advpatch/rng.hpp"

namespace advpatch {

// Forward-facing pinhole camera with square pixels and the principal point at
// the image centre.
struct CameraModel {
  int image_width = 1920;
  int image_height = 1080;
  double horizontal_fov_deg = 90.0;
  double mount_height_m = 1.5;

  void validate() const {
    if (image_width < 1 || image_height < 1) throw InvalidArgument("CameraModel: image size must be >= 1");
    if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0))
      throw InvalidArgument("CameraModel: horizontal_fov must be in (0, 180)");
  }

  double focal_px() const {
    return static_cast<double>(image_width) / (2.0 * std::tan(horizontal_fov_deg * std::numbers::pi / 360.0));
  }
  double cx() const { return image_width / 2.0; }
  double cy() const { return image_height / 2.0; }
};

// Where the patch centre sits relative to the camera: signed lateral offset
// (positive to the right), height above ground, distance along the optical axis.
struct PatchPlacement {
  double mount_center_lateral = 0.0;
  double mount_height = 1.5;
  double distance = 10.0;
};

// Projects a world-space rectangle (centre and size in metres) at the given
// depth. Shared by the patch and the renderer's scene objects.
inline PixelRect project_box(const CameraModel& cam, double lateral_m, double center_height_m, double width_m,
                             double height_m, double distance_m) {
  if (!(distance_m > 0.0)) throw InvalidArgument("projection: distance must be > 0");
  const double f = cam.focal_px();
  const double u = cam.cx() + f * lateral_m / distance_m;
  const double v = cam.cy() - f * (center_height_m - cam.mount_height_m) / distance_m;
  const int w = static_cast<int>(std::round(f * width_m / distance_m));
  const int h = static_cast<int>(std::round(f * height_m / distance_m));
  return PixelRect{static_cast<int>(std::floor(u - w / 2.0 + 0.5)), static_cast<int>(std::floor(v - h / 2.0 + 0.5)), w, h};
}

// Apparent rectangle of the patch; may extend past the frame.
inline PixelRect project_patch_rect(const CameraModel& cam, const PatchPlacement& place, const Patch& patch) {
  cam.validate();
  if (!(place.distance > 0.0)) throw InvalidArgument("project_patch_rect: distance must be > 0");
  return project_box(cam, place.mount_center_lateral, place.mount_height, patch.physical_width(), patch.physical_height(),
                     place.distance);
}

struct CompositeResult {
  ImageBuffer image;
  bool visible = false;
  PixelRect drawn;  // rect ∩ frame
};

namespace detail {

// Align-corners bilinear lookup into the quantized patch. Quantizing the four
// taps on the fly is equivalent to quantizing the whole patch first.
inline std::uint8_t sample_bilinear(const Patch& patch, double u, double v, int c) {
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const int x1 = std::min(x0 + 1, patch.width() - 1);
  const int y1 = std::min(y0 + 1, patch.height() - 1);
  const double fx = u - x0;
  const double fy = v - y0;
  const double p00 = quantize_value(patch.at(x0, y0, c));
  const double p10 = quantize_value(patch.at(x1, y0, c));
  const double p01 = quantize_value(patch.at(x0, y1, c));
  const double p11 = quantize_value(patch.at(x1, y1, c));
  const double top = p00 + (p10 - p00) * fx;
  const double bottom = p01 + (p11 - p01) * fx;
  return quantize_value(top + (bottom - top) * fy);
}

inline double source_coord(int i, int dst_extent, int src_extent) {
  if (dst_extent <= 1) return (src_extent - 1) / 2.0;
  return static_cast<double>(i) * (src_extent - 1) / (dst_extent - 1);
}

}  // namespace detail

// In-place variant used on hot paths; returns the drawn (clipped) rect.
inline PixelRect composite_into(ImageBuffer& frame, const Patch& patch, const PixelRect& rect) {
  const PixelRect drawn = intersect(rect, frame_rect(frame));
  if (drawn.empty()) return drawn;
  for (int y = drawn.y; y < drawn.bottom(); ++y) {
    const double v = detail::source_coord(y - rect.y, rect.height, patch.height());
    for (int x = drawn.x; x < drawn.right(); ++x) {
      const double u = detail::source_coord(x - rect.x, rect.width, patch.width());
      for (int c = 0; c < kChannels; ++c) frame.at(x, y, c) = detail::sample_bilinear(patch, u, v, c);
    }
  }
  return drawn;
}

// Quantizes the patch, resamples it bilinearly onto `rect` and overwrites the
// covered pixels of a copy of `frame`. Off-frame parts are dropped.
inline CompositeResult composite_patch(const ImageBuffer& frame, const Patch& patch, const PixelRect& rect) {
  CompositeResult out{frame, false, {}};
  out.drawn = composite_into(out.image, patch, rect);
  out.visible = !out.drawn.empty();
  return out;
}

// One EoT draw.
struct TransformSample {
  int dx = 0;
  int dy = 0;
  double brightness = 1.0;
  double contrast_shift = 0.0;

  static TransformSample identity() { return {}; }
};

inline constexpr int kMaxJitterPx = 5;
inline constexpr double kBrightnessLo = 0.9;
inline constexpr double kBrightnessHi = 1.1;
inline constexpr double kContrastShiftMax = 0.05;

inline TransformSample sample_transform(RngStream& rng) {
  TransformSample t;
  t.dx = static_cast<int>(rng.uniform_int(-kMaxJitterPx, kMaxJitterPx));
  t.dy = static_cast<int>(rng.uniform_int(-kMaxJitterPx, kMaxJitterPx));
  t.brightness = rng.uniform(kBrightnessLo, kBrightnessHi);
  t.contrast_shift = rng.uniform(-kContrastShiftMax, kContrastShiftMax);
  return t;
}

// Translate by (dx, dy) with replicate-edge fill, then p' = clip(b*p + c, 0, 1)
// per channel in normalised intensity, then requantize.
inline ImageBuffer apply_transform(const ImageBuffer& img, const TransformSample& t) {
  std::array<std::uint8_t, 256> lut{};
  for (int p = 0; p < 256; ++p) {
    const double n = std::min(1.0, std::max(0.0, t.brightness * (p / 255.0) + t.contrast_shift));
    lut[p] = static_cast<std::uint8_t>(std::round(n * 255.0));
  }
  ImageBuffer out = img;
  const int w = img.width();
  const int h = img.height();
  for (int y = 0; y < h; ++y) {
    const int sy = std::clamp(y - t.dy, 0, h - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::clamp(x - t.dx, 0, w - 1);
      const std::size_t src = img.offset(sx, sy);
      const std::size_t dst = out.offset(x, y);
      for (int c = 0; c < kChannels; ++c) out.data()[dst + c] = lut[img.data()[src + c]];
    }
  }
  return out;
}

}  // namespace advpatch
