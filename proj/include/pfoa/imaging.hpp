#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pfoa/box.hpp"
#include "pfoa/datamodel.hpp"

namespace pfoa::imaging {

enum class BitDepth { U8 = 8, U16 = 16 };

inline int max_value(BitDepth d) { return d == BitDepth::U8 ? 255 : 65535; }

// Grayscale raster with isotropic physical spacing. Row-major pixels.
struct Image {
  int width = 0;
  int height = 0;
  double spacing_mm = 0.2;
  BitDepth depth = BitDepth::U16;
  std::vector<std::uint16_t> pixels;

  Image() = default;
  Image(int w, int h, double spacing, BitDepth d, std::uint16_t fill = 0);

  std::uint16_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint16_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Throws ValidationError if dimensions, spacing or pixel range are invalid.
void validate(const Image& img);

// Real-valued raster used before quantization.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

Raster to_raster(const Image& img);

// Percentile by linear interpolation between order statistics:
// position p/100 * (n - 1) in the sorted sample.
double percentile_inclusive(std::span<const std::uint16_t> values, double p);

struct NormalizeResult {
  Image image;
  bool degenerate = false;  // p99 == p5; output is all zeros
  double p_low = 0.0;
  double p_high = 0.0;
};

// Truncates a 16-bit image to its [5th, 99th] percentile window and maps it
// linearly onto 0..255.
NormalizeResult normalize_intensity(const Image& img, double low_pct = 5.0, double high_pct = 99.0);

// Catmull-Rom cubic kernel (a = -0.5).
double cubic_kernel(double t);

// Bicubic sample at real coordinates with clamp-to-edge borders.
double sample_bicubic(const Raster& src, double x, double y);

// Resize a raster so that output pixel centers map onto the source grid
// through x_src = (x + 0.5) * sx - 0.5 with sx = src_w / dst_w.
Raster resize_bicubic(const Raster& src, int dst_w, int dst_h);

inline constexpr double kStandardSpacingMm = 0.2;

// Output dimensions: round(dim * spacing / target). Throws ValidationError
// when a resulting dimension is < 1.
Raster resample_values(const Image& img, double target_spacing = kStandardSpacingMm);
Image resample(const Image& img, double target_spacing = kStandardSpacingMm);

// Maps a box from the input grid of resample() onto its output grid.
RoiBox resample_box(const RoiBox& box, const Image& before, const Image& after);

Image flip_horizontal(const Image& img);

// Mirrors right-knee images so every knee faces the left-knee orientation.
Image orient_left(const Image& img, data::Side side);
RoiBox orient_box(const RoiBox& box, int image_width, data::Side side);

// Expands the box symmetrically to a 2:1 height:width aspect.
RoiBox expand_to_aspect(const RoiBox& box);

// Crops the aspect-expanded box (zero outside the image) and resizes it
// bicubically to out_h x out_w. Throws ValidationError if the box does not
// intersect the image.
Image crop_resize(const Image& img, const RoiBox& box, int out_h = 128, int out_w = 64);

// Raw container: "PFOAIMG1\n<width> <height> <depth> <spacing>\n" followed by
// little-endian pixels (1 or 2 bytes each).
void save_raw(const Image& img, const std::filesystem::path& path);
Image load_raw(const std::filesystem::path& path);

// 8/16-bit grayscale PNG. Spacing travels in a sidecar "<path>.spacing" text
// file ("spacing_mm=<value>"); load_png falls back to fallback_spacing when
// the sidecar is absent.
void save_png(const Image& img, const std::filesystem::path& path, bool write_sidecar = true);
Image load_png(const std::filesystem::path& path, double fallback_spacing = kStandardSpacingMm);

// Dispatches on extension: ".png" or ".raw".
Image load_image(const std::filesystem::path& path, double fallback_spacing = kStandardSpacingMm);
void save_image(const Image& img, const std::filesystem::path& path);

// Full preprocessing of a raw radiograph: normalize (16-bit input only),
// resample to 0.2 mm, orient to the left knee.
struct Preprocessed {
  Image image;
  bool degenerate = false;
};
Preprocessed preprocess(const Image& raw, data::Side side);

}  // namespace pfoa::imaging
