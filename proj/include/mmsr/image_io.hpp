#pragma once

// PNG (libpng) and binary/ASCII PPM codecs for [3,H,W] images in [0,1].

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mmsr/image.hpp"

namespace mmsr {

class ImageDecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline unsigned char to_u8(Real v) { return static_cast<unsigned char>(std::lround(std::clamp<double>(v, 0.0, 1.0) * 255.0)); }

struct PngReadCtx {
  std::string_view data;
  std::size_t pos = 0;
};

inline void png_read_mem(png_structp png, png_bytep out, png_size_t n) {
  auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
  if (ctx->pos + n > ctx->data.size()) png_error(png, "truncated PNG data");
  std::memcpy(out, ctx->data.data() + ctx->pos, n);
  ctx->pos += n;
}

inline void png_write_mem(png_structp png, png_bytep in, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(in), n);
}

inline void png_flush_noop(png_structp) {}

[[noreturn]] inline void png_throw(png_structp, png_const_charp msg) { throw ImageDecodeError(std::string("PNG: ") + msg); }
inline void png_warn_ignore(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads only the header; returns {width, height}. Lets callers reject oversized
/// images before decoding.
inline std::pair<std::size_t, std::size_t> png_dimensions(std::string_view bytes) {
  if (bytes.size() < 24 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) throw ImageDecodeError("not a PNG");
  auto be32 = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[off + static_cast<std::size_t>(i)]);
    return v;
  };
  return {be32(16), be32(20)};
}

inline Image decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) throw ImageDecodeError("not a PNG");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn_ignore);
  if (!png) throw std::bad_alloc();
  png_infop info = png_create_info_struct(png);
  detail::PngReadCtx ctx{bytes, 0};
  Image img;
  try {
    if (!info) throw std::bad_alloc();
    png_set_read_fn(png, &ctx, detail::png_read_mem);
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info), ct = png_get_color_type(png, info);
    if (ct == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (ct == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (bit_depth == 16) png_set_strip_16(png);
    if (ct == PNG_COLOR_TYPE_GRAY || ct == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    if (png_get_channels(png, info) != 3) throw ImageDecodeError("PNG: unsupported channel layout");
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (std::size_t y = 0; y < h; ++y) rows[y] = buf.data() + y * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    img = make_image(3, h, w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<Real>(buf[(y * w + x) * 3 + c]) / Real(255);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

/// 8-bit RGB PNG; values are clipped to [0,1] and rounded.
inline std::string encode_png(const Image& img) {
  require_image(img, "encode_png");
  const std::size_t h = height(img), w = width(img);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_throw, detail::png_warn_ignore);
  if (!png) throw std::bad_alloc();
  png_infop info = png_create_info_struct(png);
  std::string out;
  try {
    if (!info) throw std::bad_alloc();
    png_set_write_fn(png, &out, detail::png_write_mem, detail::png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(w * 3);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) row[x * 3 + c] = detail::to_u8(img.at(c, y, x));
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

namespace detail {

struct PnmCursor {
  std::string_view s;
  std::size_t pos = 0;

  void skip_ws() {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }
  unsigned long number() {
    skip_ws();
    if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) throw ImageDecodeError("PPM: expected a number");
    unsigned long v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + static_cast<unsigned long>(s[pos++] - '0');
      if (v > 0xffffffUL) throw ImageDecodeError("PPM: number out of range");
    }
    return v;
  }
};

}  // namespace detail

inline std::pair<std::size_t, std::size_t> ppm_dimensions(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '3' && bytes[1] != '6')) throw ImageDecodeError("not a PPM");
  detail::PnmCursor cur{bytes, 2};
  const auto w = cur.number();
  const auto h = cur.number();
  return {w, h};
}

/// P3 (ASCII) and P6 (binary) with maxval up to 65535.
inline Image decode_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '3' && bytes[1] != '6')) throw ImageDecodeError("not a PPM");
  const bool binary = bytes[1] == '6';
  detail::PnmCursor cur{bytes, 2};
  const auto w = cur.number(), h = cur.number(), maxval = cur.number();
  if (w == 0 || h == 0) throw ImageDecodeError("PPM: empty image");
  if (maxval == 0 || maxval > 65535) throw ImageDecodeError("PPM: bad maxval");
  Image img = make_image(3, h, w);
  const Real mv = static_cast<Real>(maxval);
  if (binary) {
    if (cur.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[cur.pos]))) throw ImageDecodeError("PPM: bad header");
    ++cur.pos;
    const std::size_t bps = maxval > 255 ? 2 : 1;
    if (bytes.size() - cur.pos < w * h * 3 * bps) throw ImageDecodeError("PPM: truncated pixel data");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + cur.pos);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t i = ((y * w + x) * 3 + c) * bps;
          const unsigned v = bps == 2 ? (p[i] << 8 | p[i + 1]) : p[i];
          if (v > maxval) throw ImageDecodeError("PPM: sample exceeds maxval");
          img.at(c, y, x) = static_cast<Real>(v) / mv;
        }
  } else {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const auto v = cur.number();
          if (v > maxval) throw ImageDecodeError("PPM: sample exceeds maxval");
          img.at(c, y, x) = static_cast<Real>(v) / mv;
        }
  }
  return img;
}

inline std::string encode_ppm(const Image& img) {
  require_image(img, "encode_ppm");
  const std::size_t h = height(img), w = width(img);
  std::string out = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + w * h * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.push_back(static_cast<char>(detail::to_u8(img.at(c, y, x))));
  return out;
}

inline bool looks_like_png(std::string_view b) { return b.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(b.data()), 0, 8) == 0; }
inline bool looks_like_ppm(std::string_view b) { return b.size() >= 2 && b[0] == 'P' && (b[1] == '3' || b[1] == '6'); }

/// {width, height} from the header of a PNG or PPM payload.
inline std::pair<std::size_t, std::size_t> image_dimensions(std::string_view bytes) {
  if (looks_like_png(bytes)) return png_dimensions(bytes);
  if (looks_like_ppm(bytes)) return ppm_dimensions(bytes);
  throw ImageDecodeError("unrecognized image format (expected PNG or PPM)");
}

inline Image decode_image(std::string_view bytes) {
  if (looks_like_png(bytes)) return decode_png(bytes);
  if (looks_like_ppm(bytes)) return decode_ppm(bytes);
  throw ImageDecodeError("unrecognized image format (expected PNG or PPM)");
}

inline std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write failed for '" + path + "'");
}

inline Image read_image(const std::string& path) { return decode_image(slurp(path)); }

/// Format chosen by extension: .ppm writes P6, anything else PNG.
inline void write_image(const std::string& path, const Image& img) {
  const bool ppm = path.size() >= 4 && path.compare(path.size() - 4, 4, ".ppm") == 0;
  write_bytes(path, ppm ? encode_ppm(img) : encode_png(img));
}

}  // namespace mmsr
