#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "pfoa/error.hpp"
#include "pfoa/imaging.hpp"

namespace pfoa::imaging {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p += ".spacing";
  return p;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw Error(std::string("libpng: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

void save_png(const Image& img, const std::filesystem::path& path, bool write_sidecar) {
  validate(img);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, fp.get());
  const int bits = img.depth == BitDepth::U16 ? 16 : 8;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), bits,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_bytes = static_cast<std::size_t>(img.width) * (bits / 8);
  std::vector<png_byte> row(row_bytes);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const auto v = img.at(x, y);
      if (bits == 16) {
        row[2 * x] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        row[2 * x + 1] = static_cast<png_byte>(v & 0xff);
      } else {
        row[x] = static_cast<png_byte>(v);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);

  if (write_sidecar) {
    std::ofstream side(sidecar_path(path));
    side << "spacing_mm=" << data::format_double(img.spacing_mm) << '\n';
  }
}

Image load_png(const std::filesystem::path& path, double fallback_spacing) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw Error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, fp.get());
  png_read_info(png, info);
  const auto w = static_cast<int>(png_get_image_width(png, info));
  const auto h = static_cast<int>(png_get_image_height(png, info));
  const int bits = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (color != PNG_COLOR_TYPE_GRAY || (bits != 8 && bits != 16)) {
    throw ValidationError(path.string() + ": only 8/16-bit grayscale PNG is supported");
  }
  double spacing = fallback_spacing;
  if (std::ifstream side(sidecar_path(path)); side) {
    std::string line;
    std::getline(side, line);
    constexpr std::string_view kKey = "spacing_mm=";
    if (!std::string_view(line).starts_with(kKey)) {
      throw ParseError(sidecar_path(path).string() + ": expected spacing_mm=<value>");
    }
    spacing = data::parse_double(std::string_view(line).substr(kKey.size()));
  }
  Image img(w, h, spacing, bits == 16 ? BitDepth::U16 : BitDepth::U8, 0);
  std::vector<png_byte> row(png_get_rowbytes(png, info));
  for (int y = 0; y < h; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = bits == 16 ? static_cast<std::uint16_t>((row[2 * x] << 8) | row[2 * x + 1]) : row[x];
    }
  }
  png_read_end(png, nullptr);
  validate(img);
  return img;
}

}  // namespace pfoa::imaging
