#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "echo2mri/error.hpp"
#include "echo2mri/frame.hpp"

// Lossless grayscale still-image I/O. PNG (8/16-bit, any colour type, colour
// collapsed to luma) and binary/ASCII PGM. Values are returned in [0, 1].

namespace echo2mri::dataio {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline float from_u16(std::uint16_t v) { return static_cast<float>(v) / 65535.0f; }
inline float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

inline std::uint16_t to_u16(float v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 65535.0));
}
inline std::uint8_t to_u8(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

inline std::string lower_ext(const std::filesystem::path& p) {
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e;
}

inline Image read_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw IngestionError(path.string(), "cannot open");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw IngestionError(path.string(), "not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IngestionError(path.string(), "libpng initialisation failed");
  }
  Image img;
  std::vector<png_byte> buffer;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IngestionError(path.string(), "corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_COLOR || color == PNG_COLOR_TYPE_PALETTE) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  png_set_strip_alpha(png);
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);
  const auto w = png_get_image_width(png, info);
  const auto h = png_get_image_height(png, info);
  const auto rowbytes = png_get_rowbytes(png, info);
  const bool wide = png_get_bit_depth(png, info) == 16;
  buffer.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.resize(h, w);
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      if (wide) {
        std::uint16_t v;
        std::memcpy(&v, rows[y] + 2 * x, 2);
        img(y, x) = from_u16(v);
      } else {
        img(y, x) = from_u8(rows[y][x]);
      }
    }
  }
  return img;
}

inline void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw InputError("PNG bit depth must be 8 or 16");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("libpng initialisation failed");
  }
  const auto h = static_cast<png_uint_32>(img.rows()), w = static_cast<png_uint_32>(img.cols());
  const std::size_t bpp = bit_depth / 8;
  std::vector<png_byte> buffer(static_cast<std::size_t>(h) * w * bpp);
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      png_byte* px = buffer.data() + (static_cast<std::size_t>(y) * w + x) * bpp;
      if (bit_depth == 16) {
        const auto v = to_u16(img(y, x));
        px[0] = static_cast<png_byte>(v >> 8);  // PNG is big-endian
        px[1] = static_cast<png_byte>(v & 0xff);
      } else {
        px[0] = to_u8(img(y, x));
      }
    }
  }
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = buffer.data() + static_cast<std::size_t>(y) * w * bpp;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG encoding failed for " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError(path.string(), "cannot open");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") throw IngestionError(path.string(), "not a PGM file");
  auto next_int = [&]() {
    int v = -1;
    while (in >> std::ws && in.peek() == '#') in.ignore(1 << 20, '\n');
    in >> v;
    if (!in) throw IngestionError(path.string(), "truncated PGM header");
    return v;
  };
  const int w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) {
    throw IngestionError(path.string(), "invalid PGM header");
  }
  Image img(h, w);
  if (magic == "P2") {
    for (int i = 0; i < w * h; ++i) img.data()[i] = static_cast<float>(next_int()) / maxval;
    return img;
  }
  in.get();
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bytes);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IngestionError(path.string(), "truncated PGM data");
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i) {
    const int v = bytes == 2 ? (raw[2 * i] << 8 | raw[2 * i + 1]) : raw[i];
    img.data()[i] = static_cast<float>(v) / maxval;
  }
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << "P5\n" << img.cols() << " " << img.rows() << "\n65535\n";
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const auto v = to_u16(img.data()[i]);
    out.put(static_cast<char>(v >> 8));
    out.put(static_cast<char>(v & 0xff));
  }
}

}  // namespace detail

inline bool is_image_file(const std::filesystem::path& p) {
  const auto e = detail::lower_ext(p);
  return e == ".png" || e == ".pgm";
}

/// Reads a grayscale frame in [0, 1]; 16-bit data keeps full precision.
inline Image read_image(const std::filesystem::path& path) {
  const auto e = detail::lower_ext(path);
  if (e == ".png") return detail::read_png(path);
  if (e == ".pgm") return detail::read_pgm(path);
  throw IngestionError(path.string(), "unsupported image format '" + e + "'");
}

/// Writes 16-bit grayscale (PNG or PGM by extension); values clamped to [0, 1].
inline void write_image(const std::filesystem::path& path, const Image& img) {
  const auto e = detail::lower_ext(path);
  if (e == ".png") return detail::write_png(path, img, 16);
  if (e == ".pgm") return detail::write_pgm(path, img);
  throw InputError("unsupported output format '" + e + "'");
}

}  // namespace echo2mri::dataio
