#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "synood/error.hpp"
#include "synood/tensor.hpp"

namespace synood {

// 8-bit image buffer as decoded from disk: row-major, channel-last.
struct ImageU8 {
  int h = 0;
  int w = 0;
  int c = 0;
  std::vector<std::uint8_t> data;  // h*w*c

  std::uint8_t at(int r, int col, int ch) const {
    return data[(static_cast<std::size_t>(r) * w + col) * c + ch];
  }
};

// Converts to a [C,H,W] tensor in [0,1].
inline Tensor to_tensor(const ImageU8& img) {
  Tensor t({img.c, img.h, img.w});
  for (int ch = 0; ch < img.c; ++ch) {
    for (int r = 0; r < img.h; ++r) {
      for (int col = 0; col < img.w; ++col) {
        t[(static_cast<std::int64_t>(ch) * img.h + r) * img.w + col] =
            static_cast<double>(img.at(r, col, ch)) / 255.0;
      }
    }
  }
  return t;
}

// Converts a [C,H,W] tensor in [0,1] to 8-bit with round-to-nearest.
inline ImageU8 to_u8(const Tensor& t) {
  if (t.ndim() != 3) throw ValidationError("to_u8: expected [C,H,W] tensor");
  ImageU8 img;
  img.c = t.dim(0);
  img.h = t.dim(1);
  img.w = t.dim(2);
  img.data.resize(static_cast<std::size_t>(img.h) * img.w * img.c);
  for (int ch = 0; ch < img.c; ++ch) {
    for (int r = 0; r < img.h; ++r) {
      for (int col = 0; col < img.w; ++col) {
        const double v = t[(static_cast<std::int64_t>(ch) * img.h + r) * img.w + col];
        const double clamped = std::clamp(v, 0.0, 1.0);
        img.data[(static_cast<std::size_t>(r) * img.w + col) * img.c + ch] =
            static_cast<std::uint8_t>(std::lround(clamped * 255.0));
      }
    }
  }
  return img;
}

// Bilinear resize of a [C,H,W] tensor (align-corners-free convention).
inline Tensor bilinear_resize(const Tensor& src, int out_h, int out_w) {
  if (src.ndim() != 3) throw ValidationError("bilinear_resize: expected [C,H,W]");
  const int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (out_h <= 0 || out_w <= 0) throw ValidationError("bilinear_resize: bad output size");
  if (h == out_h && w == out_w) return src;
  Tensor dst({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = src.data() + static_cast<std::int64_t>(ch) * h * w;
    double* out = dst.data() + static_cast<std::int64_t>(ch) * out_h * out_w;
    for (int r = 0; r < out_h; ++r) {
      const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int col = 0; col < out_w; ++col) {
        const double fx =
            std::clamp((col + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = plane[y0 * w + x0] * (1.0 - wx) + plane[y0 * w + x1] * wx;
        const double bot = plane[y1 * w + x0] * (1.0 - wx) + plane[y1 * w + x1] * wx;
        out[r * out_w + col] = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return dst;
}

}  // namespace synood
