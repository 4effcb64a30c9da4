#pragma once

// Pixel-domain simulation of a baseline JPEG round trip. Entropy coding is
// lossless and therefore omitted; only colour conversion, chroma subsampling
// and DCT-coefficient quantization shape the output.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmsr/image.hpp"

namespace mmsr::degrade {

namespace jpeg_detail {

// ITU-T T.81 Annex K tables, natural (row-major) order.
inline constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

inline constexpr std::array<int, 64> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  std::array<double, 64> c{};  // c[u*8+x] = a(u) cos((2x+1)u pi / 16)
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
        c[static_cast<std::size_t>(u * 8 + x)] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
  }
};

inline const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

// Orthonormal 2D DCT-II (forward) or DCT-III (inverse) of an 8x8 block in place.
inline void dct8x8(std::array<double, 64>& blk, bool inverse) {
  const auto& c = basis().c;
  std::array<double, 64> tmp{};
  for (int r = 0; r < 8; ++r)
    for (int u = 0; u < 8; ++u) {
      double s = 0;
      for (int x = 0; x < 8; ++x)
        s += inverse ? c[static_cast<std::size_t>(x * 8 + u)] * blk[static_cast<std::size_t>(r * 8 + x)]
                     : c[static_cast<std::size_t>(u * 8 + x)] * blk[static_cast<std::size_t>(r * 8 + x)];
      tmp[static_cast<std::size_t>(r * 8 + u)] = s;
    }
  for (int col = 0; col < 8; ++col)
    for (int v = 0; v < 8; ++v) {
      double s = 0;
      for (int y = 0; y < 8; ++y)
        s += inverse ? c[static_cast<std::size_t>(y * 8 + v)] * tmp[static_cast<std::size_t>(y * 8 + col)]
                     : c[static_cast<std::size_t>(v * 8 + y)] * tmp[static_cast<std::size_t>(y * 8 + col)];
      blk[static_cast<std::size_t>(v * 8 + col)] = s;
    }
}

// Quantize+dequantize one plane (values already level-shifted) whose extents are multiples of 8.
inline void quantize_plane(std::vector<double>& plane, std::size_t h, std::size_t w, const std::array<int, 64>& q) {
  std::array<double, 64> blk{};
  for (std::size_t by = 0; by < h; by += 8)
    for (std::size_t bx = 0; bx < w; bx += 8) {
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) blk[y * 8 + x] = plane[(by + y) * w + bx + x];
      dct8x8(blk, false);
      for (std::size_t i = 0; i < 64; ++i) blk[i] = std::round(blk[i] / q[i]) * q[i];
      dct8x8(blk, true);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) plane[(by + y) * w + bx + x] = blk[y * 8 + x];
    }
}

}  // namespace jpeg_detail

/// IJG quality scaling of a base quantization table.
inline std::array<int, 64> scaled_quant_table(const std::array<int, 64>& base, int quality) {
  if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg quality must lie in [1,100], got " + std::to_string(quality));
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> out{};
  for (std::size_t i = 0; i < 64; ++i) out[i] = std::clamp((base[i] * s + 50) / 100, 1, 255);
  return out;
}

inline std::array<int, 64> luma_quant_table(int quality) { return scaled_quant_table(jpeg_detail::kLumaTable, quality); }
inline std::array<int, 64> chroma_quant_table(int quality) { return scaled_quant_table(jpeg_detail::kChromaTable, quality); }

struct JpegOptions {
  bool chroma_subsampling = true;  // 4:2:0
};

inline Image jpeg_compress(const Image& img, int quality, JpegOptions opt = {}) {
  require_image(img, "jpeg_compress");
  const auto qy = luma_quant_table(quality);
  const auto qc = chroma_quant_table(quality);
  const std::size_t c = channels(img), h = height(img), w = width(img);
  if (c != 3 && c != 1) throw ShapeError("jpeg_compress: expected 1 or 3 channels");
  const std::size_t mcu = (c == 3 && opt.chroma_subsampling) ? 16 : 8;
  const std::size_t ph = (h + mcu - 1) / mcu * mcu, pw = (w + mcu - 1) / mcu * mcu;
  const std::size_t plane = h * w;

  // Edge-replicate into padded planes on the 0..255 scale, level-shifted.
  auto padded = [&](auto&& sample) {
    std::vector<double> p(ph * pw);
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x) p[y * pw + x] = sample(std::min(y, h - 1), std::min(x, w - 1));
    return p;
  };

  Image out = make_image(c, h, w);
  if (c == 1) {
    auto yp = padded([&](std::size_t y, std::size_t x) { return 255.0 * img[y * w + x] - 128.0; });
    jpeg_detail::quantize_plane(yp, ph, pw, qy);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out[y * w + x] = (yp[y * pw + x] + 128.0) / 255.0;
    return clip01(std::move(out));
  }

  auto rgb = [&](std::size_t ch, std::size_t y, std::size_t x) { return 255.0 * img[ch * plane + y * w + x]; };
  auto yp = padded([&](std::size_t y, std::size_t x) {
    return 0.299 * rgb(0, y, x) + 0.587 * rgb(1, y, x) + 0.114 * rgb(2, y, x) - 128.0;
  });
  auto cbp = padded([&](std::size_t y, std::size_t x) {
    return -0.168735892 * rgb(0, y, x) - 0.331264108 * rgb(1, y, x) + 0.5 * rgb(2, y, x);
  });
  auto crp = padded([&](std::size_t y, std::size_t x) {
    return 0.5 * rgb(0, y, x) - 0.418687589 * rgb(1, y, x) - 0.081312411 * rgb(2, y, x);
  });
  jpeg_detail::quantize_plane(yp, ph, pw, qy);

  if (opt.chroma_subsampling) {
    const std::size_t sh = ph / 2, sw = pw / 2;
    for (auto* p : {&cbp, &crp}) {
      std::vector<double> sub(sh * sw);
      for (std::size_t y = 0; y < sh; ++y)
        for (std::size_t x = 0; x < sw; ++x)
          sub[y * sw + x] = 0.25 * ((*p)[(2 * y) * pw + 2 * x] + (*p)[(2 * y) * pw + 2 * x + 1] +
                                    (*p)[(2 * y + 1) * pw + 2 * x] + (*p)[(2 * y + 1) * pw + 2 * x + 1]);
      jpeg_detail::quantize_plane(sub, sh, sw, qc);
      for (std::size_t y = 0; y < ph; ++y)
        for (std::size_t x = 0; x < pw; ++x) (*p)[y * pw + x] = sub[(y / 2) * sw + x / 2];
    }
  } else {
    jpeg_detail::quantize_plane(cbp, ph, pw, qc);
    jpeg_detail::quantize_plane(crp, ph, pw, qc);
  }

  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double Y = yp[y * pw + x] + 128.0, cb = cbp[y * pw + x], cr = crp[y * pw + x];
      out[0 * plane + y * w + x] = (Y + 1.402 * cr) / 255.0;
      out[1 * plane + y * w + x] = (Y - 0.344136286 * cb - 0.714136286 * cr) / 255.0;
      out[2 * plane + y * w + x] = (Y + 1.772 * cb) / 255.0;
    }
  return clip01(std::move(out));
}

}  // namespace mmsr::degrade
