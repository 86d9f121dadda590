#include "pfoa/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "pfoa/error.hpp"

namespace pfoa::imaging {

Image::Image(int w, int h, double spacing, BitDepth d, std::uint16_t fill)
    : width(w), height(h), spacing_mm(spacing), depth(d) {
  if (w < 1 || h < 1) throw ValidationError("image dimensions must be >= 1");
  pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
}

void validate(const Image& img) {
  if (img.width < 1 || img.height < 1) throw ValidationError("image dimensions must be >= 1");
  if (!(img.spacing_mm > 0.0)) throw ValidationError("image spacing must be > 0");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height)) {
    throw ValidationError("pixel buffer does not match image dimensions");
  }
  const auto limit = max_value(img.depth);
  for (auto v : img.pixels) {
    if (v > limit) throw ValidationError("pixel value exceeds 8-bit range");
  }
}

Raster to_raster(const Image& img) {
  Raster r{img.width, img.height, {}};
  r.values.assign(img.pixels.begin(), img.pixels.end());
  return r;
}

double percentile_inclusive(std::span<const std::uint16_t> values, double p) {
  if (values.empty()) throw ValidationError("percentile of empty sample");
  // Counting sort: order statistics straight from the histogram.
  std::vector<std::size_t> hist(65536, 0);
  for (auto v : values) ++hist[v];
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo_rank = static_cast<std::size_t>(std::floor(pos));
  const auto hi_rank = std::min(lo_rank + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo_rank);

  auto value_at_rank = [&](std::size_t rank) {
    std::size_t cum = 0;
    for (std::size_t v = 0; v < hist.size(); ++v) {
      cum += hist[v];
      if (cum > rank) return static_cast<double>(v);
    }
    return 65535.0;
  };
  const double lo = value_at_rank(lo_rank);
  const double hi = value_at_rank(hi_rank);
  return lo + frac * (hi - lo);
}

NormalizeResult normalize_intensity(const Image& img, double low_pct, double high_pct) {
  validate(img);
  if (img.depth != BitDepth::U16) throw ValidationError("normalize_intensity expects a 16-bit image");
  NormalizeResult res;
  res.p_low = percentile_inclusive(img.pixels, low_pct);
  res.p_high = percentile_inclusive(img.pixels, high_pct);
  res.image = Image(img.width, img.height, img.spacing_mm, BitDepth::U8, 0);
  const double range = res.p_high - res.p_low;
  if (!(range > 0.0)) {
    res.degenerate = true;
    return res;
  }
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double t = std::clamp((static_cast<double>(img.pixels[i]) - res.p_low) / range, 0.0, 1.0);
    res.image.pixels[i] = static_cast<std::uint16_t>(std::lround(t * 255.0));
  }
  return res;
}

double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

double sample_bicubic(const Raster& src, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  std::array<double, 4> wx{};
  std::array<double, 4> wy{};
  std::array<int, 4> ix{};
  std::array<int, 4> iy{};
  for (int k = 0; k < 4; ++k) {
    const int xi = x0 - 1 + k;
    const int yi = y0 - 1 + k;
    wx[k] = cubic_kernel(x - xi);
    wy[k] = cubic_kernel(y - yi);
    ix[k] = std::clamp(xi, 0, src.width - 1);
    iy[k] = std::clamp(yi, 0, src.height - 1);
  }
  double acc = 0.0;
  for (int j = 0; j < 4; ++j) {
    double row = 0.0;
    for (int i = 0; i < 4; ++i) row += wx[i] * src.at(ix[i], iy[j]);
    acc += wy[j] * row;
  }
  return acc;
}

Raster resize_bicubic(const Raster& src, int dst_w, int dst_h) {
  if (dst_w < 1 || dst_h < 1) throw ValidationError("resize target must be at least 1x1");
  Raster out{dst_w, dst_h, std::vector<double>(static_cast<std::size_t>(dst_w) * dst_h)};
  const double sx = static_cast<double>(src.width) / dst_w;
  const double sy = static_cast<double>(src.height) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    const double ys = (y + 0.5) * sy - 0.5;
    for (int x = 0; x < dst_w; ++x) {
      const double xs = (x + 0.5) * sx - 0.5;
      out.values[static_cast<std::size_t>(y) * dst_w + x] = sample_bicubic(src, xs, ys);
    }
  }
  return out;
}

namespace {

Image quantize(const Raster& r, double spacing, BitDepth depth) {
  Image out(r.width, r.height, spacing, depth, 0);
  const double hi = max_value(depth);
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    out.pixels[i] = static_cast<std::uint16_t>(std::lround(std::clamp(r.values[i], 0.0, hi)));
  }
  return out;
}

int scaled_dim(int dim, double spacing, double target) {
  return static_cast<int>(std::lround(dim * spacing / target));
}

}  // namespace

Raster resample_values(const Image& img, double target_spacing) {
  validate(img);
  if (!(target_spacing > 0.0)) throw ValidationError("target spacing must be > 0");
  const int w = scaled_dim(img.width, img.spacing_mm, target_spacing);
  const int h = scaled_dim(img.height, img.spacing_mm, target_spacing);
  if (w < 1 || h < 1) throw ValidationError("resampled image would have a dimension < 1");
  if (w == img.width && h == img.height && img.spacing_mm == target_spacing) return to_raster(img);
  return resize_bicubic(to_raster(img), w, h);
}

Image resample(const Image& img, double target_spacing) {
  validate(img);
  if (img.spacing_mm == target_spacing) return img;
  return quantize(resample_values(img, target_spacing), target_spacing, img.depth);
}

RoiBox resample_box(const RoiBox& box, const Image& before, const Image& after) {
  const double fx = static_cast<double>(after.width) / before.width;
  const double fy = static_cast<double>(after.height) / before.height;
  const auto x0 = std::lround(box.x * fx);
  const auto y0 = std::lround(box.y * fy);
  const auto x1 = std::lround((box.x + box.w) * fx);
  const auto y1 = std::lround((box.y + box.h) * fy);
  return RoiBox{static_cast<int>(x0), static_cast<int>(y0), static_cast<int>(std::max(1L, x1 - x0)),
                static_cast<int>(std::max(1L, y1 - y0))};
}

Image flip_horizontal(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    auto row = out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * img.width;
    std::reverse(row, row + img.width);
  }
  return out;
}

Image orient_left(const Image& img, data::Side side) {
  return side == data::Side::Right ? flip_horizontal(img) : img;
}

RoiBox orient_box(const RoiBox& box, int image_width, data::Side side) {
  if (side == data::Side::Left) return box;
  RoiBox out = box;
  out.x = image_width - box.x - box.w;
  return out;
}

RoiBox expand_to_aspect(const RoiBox& box) {
  RoiBox out = box;
  if (box.h < 2 * box.w) {
    out.h = 2 * box.w;
    out.y = box.y - (out.h - box.h) / 2;
  } else if (box.h > 2 * box.w) {
    out.w = (box.h + 1) / 2;
    out.h = 2 * out.w;
    out.x = box.x - (out.w - box.w) / 2;
    out.y = box.y - (out.h - box.h) / 2;
  }
  return out;
}

Image crop_resize(const Image& img, const RoiBox& box, int out_h, int out_w) {
  validate(img);
  if (box.w < 1 || box.h < 1) throw ValidationError("ROI box must have positive size");
  const RoiBox full{0, 0, img.width, img.height};
  if (intersection_area(full, box) == 0) {
    throw ValidationError("ROI box does not intersect the image");
  }
  const RoiBox ex = expand_to_aspect(box);
  Raster region{ex.w, ex.h, std::vector<double>(static_cast<std::size_t>(ex.w) * ex.h, 0.0)};
  for (int y = 0; y < ex.h; ++y) {
    const int sy = ex.y + y;
    if (sy < 0 || sy >= img.height) continue;
    for (int x = 0; x < ex.w; ++x) {
      const int sx = ex.x + x;
      if (sx < 0 || sx >= img.width) continue;
      region.values[static_cast<std::size_t>(y) * ex.w + x] = img.at(sx, sy);
    }
  }
  const Raster resized =
      (ex.w == out_w && ex.h == out_h) ? region : resize_bicubic(region, out_w, out_h);
  return quantize(resized, img.spacing_mm * ex.w / out_w, img.depth);
}

Preprocessed preprocess(const Image& raw, data::Side side) {
  Preprocessed out;
  Image eight;
  if (raw.depth == BitDepth::U16) {
    auto norm = normalize_intensity(raw);
    out.degenerate = norm.degenerate;
    eight = std::move(norm.image);
  } else {
    validate(raw);
    eight = raw;
  }
  out.image = orient_left(resample(eight, kStandardSpacingMm), side);
  return out;
}

// ---------------------------------------------------------------------------
// I/O

void save_raw(const Image& img, const std::filesystem::path& path) {
  validate(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write image " + path.string());
  out << "PFOAIMG1\n"
      << img.width << ' ' << img.height << ' ' << static_cast<int>(img.depth) << ' '
      << data::format_double(img.spacing_mm) << '\n';
  std::vector<char> buf;
  const bool wide = img.depth == BitDepth::U16;
  buf.reserve(img.pixels.size() * (wide ? 2 : 1));
  for (auto v : img.pixels) {
    buf.push_back(static_cast<char>(v & 0xff));
    if (wide) buf.push_back(static_cast<char>(v >> 8));
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Image load_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != "PFOAIMG1") throw ParseError(path.string() + ": not a raw image container");
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  int w = 0, h = 0, d = 0;
  std::string spacing;
  if (!(hs >> w >> h >> d >> spacing) || (d != 8 && d != 16)) {
    throw ParseError(path.string() + ": malformed raw image header");
  }
  Image img(w, h, data::parse_double(spacing), d == 8 ? BitDepth::U8 : BitDepth::U16, 0);
  const std::size_t bytes = img.pixels.size() * (d == 16 ? 2 : 1);
  std::vector<unsigned char> buf(bytes);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(in.gcount()) != bytes) throw ParseError(path.string() + ": truncated pixels");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = d == 16 ? static_cast<std::uint16_t>(buf[2 * i] | (buf[2 * i + 1] << 8)) : buf[i];
  }
  validate(img);
  return img;
}

Image load_image(const std::filesystem::path& path, double fallback_spacing) {
  if (path.extension() == ".raw") return load_raw(path);
  if (path.extension() == ".png") return load_png(path, fallback_spacing);
  throw ValidationError("unsupported image extension: " + path.string());
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (path.extension() == ".raw") return save_raw(img, path);
  if (path.extension() == ".png") return save_png(img, path);
  throw ValidationError("unsupported image extension: " + path.string());
}

}  // namespace pfoa::imaging
