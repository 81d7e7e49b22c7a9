#include "synood/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "synood/error.hpp"

namespace synood {

const char* mask_style_name(MaskStyle style) {
  switch (style) {
    case MaskStyle::NONE: return "none";
    case MaskStyle::RANDOMLY: return "randomly";
    case MaskStyle::FIXED_LOW: return "fixed_low";
    case MaskStyle::FIXED_HIGH: return "fixed_high";
    case MaskStyle::PATCHED: return "patched";
    case MaskStyle::SHUFFLING: return "shuffling";
  }
  return "?";
}

MaskStyle mask_style_from_name(const std::string& s) {
  if (s == "none") return MaskStyle::NONE;
  if (s == "randomly") return MaskStyle::RANDOMLY;
  if (s == "fixed_low") return MaskStyle::FIXED_LOW;
  if (s == "fixed_high") return MaskStyle::FIXED_HIGH;
  if (s == "patched") return MaskStyle::PATCHED;
  if (s == "shuffling") return MaskStyle::SHUFFLING;
  throw ValidationError("unknown mask style: " + s);
}

namespace {

void validate_spec(const MaskSpec& spec, int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("generate_mask: non-positive shape");
  if (spec.ratio_low < 0.0 || spec.ratio_high > 1.0 || spec.ratio_low > spec.ratio_high) {
    throw ValidationError("mask spec: need 0 <= ratio_low <= ratio_high <= 1");
  }
  if (spec.style == MaskStyle::PATCHED) {
    if (spec.patch_size <= 0) throw ValidationError("mask spec: patch_size must be positive");
    if (spec.patch_size > std::min(h, w)) {
      throw ValidationError("mask spec: patch_size exceeds image side");
    }
  }
  if (spec.fill_value < 0.0 || spec.fill_value > 1.0) {
    throw ValidationError("mask spec: fill_value outside [0,1]");
  }
}

// Marks `count` distinct positions chosen uniformly among `total`.
void mask_random_positions(MaskMap& mask, std::int64_t count, Rng& rng) {
  const std::int64_t total = static_cast<std::int64_t>(mask.bits.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first `count` slots end up a uniform sample.
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t j = rng.uniform_int(i, total - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    mask.bits[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
  }
}

}  // namespace

MaskMap generate_mask(const MaskSpec& spec, int h, int w, Rng& rng) {
  validate_spec(spec, h, w);
  MaskMap mask;
  mask.h = h;
  mask.w = w;
  mask.bits.assign(static_cast<std::size_t>(h) * w, 0);

  const std::int64_t total = static_cast<std::int64_t>(h) * w;
  switch (spec.style) {
    case MaskStyle::NONE:
    case MaskStyle::SHUFFLING:
      break;  // all zeros
    case MaskStyle::RANDOMLY: {
      const double r = rng.uniform(spec.ratio_low, spec.ratio_high);
      mask_random_positions(mask, static_cast<std::int64_t>(std::floor(r * total)), rng);
      break;
    }
    case MaskStyle::FIXED_LOW:
      mask_random_positions(
          mask, static_cast<std::int64_t>(std::floor(spec.ratio_low * total)), rng);
      break;
    case MaskStyle::FIXED_HIGH:
      mask_random_positions(
          mask, static_cast<std::int64_t>(std::floor(spec.ratio_high * total)), rng);
      break;
    case MaskStyle::PATCHED: {
      const int ps = spec.patch_size;
      const int rows = h / ps, cols = w / ps;  // aligned full tiles only
      const std::int64_t tile_area = static_cast<std::int64_t>(ps) * ps;
      std::int64_t tiles =
          static_cast<std::int64_t>(std::floor(spec.ratio_high * total / tile_area));
      tiles = std::min<std::int64_t>(tiles, static_cast<std::int64_t>(rows) * cols);
      std::vector<int> order(static_cast<std::size_t>(rows) * cols);
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(order.begin(), order.end());
      for (std::int64_t t = 0; t < tiles; ++t) {
        const int tile = order[static_cast<std::size_t>(t)];
        const int r0 = (tile / cols) * ps, c0 = (tile % cols) * ps;
        for (int r = 0; r < ps; ++r) {
          for (int c = 0; c < ps; ++c) {
            mask.bits[static_cast<std::size_t>(r0 + r) * w + (c0 + c)] = 1;
          }
        }
      }
      break;
    }
  }

  std::int64_t ones = 0;
  for (std::uint8_t b : mask.bits) ones += b;
  mask.realized_ratio = static_cast<double>(ones) / static_cast<double>(total);
  return mask;
}

Tensor apply_mask(const Tensor& pixels, const MaskMap& mask, const MaskSpec& spec, Rng& rng) {
  if (pixels.ndim() != 3) throw ValidationError("apply_mask: expected [C,H,W] pixels");
  const int c = pixels.dim(0), h = pixels.dim(1), w = pixels.dim(2);
  if (h != mask.h || w != mask.w) {
    throw ValidationError("apply_mask: mask shape does not match image");
  }
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out = pixels;

  if (spec.style == MaskStyle::SHUFFLING) {
    // One spatial permutation, shared across channels, so each channel's
    // pixel multiset is preserved.
    std::vector<std::int64_t> perm(static_cast<std::size_t>(plane));
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    for (int ch = 0; ch < c; ++ch) {
      const double* src = pixels.data() + ch * plane;
      double* dst = out.data() + ch * plane;
      for (std::int64_t p = 0; p < plane; ++p) dst[p] = src[perm[static_cast<std::size_t>(p)]];
    }
    return out;
  }

  for (std::int64_t p = 0; p < plane; ++p) {
    if (mask.bits[static_cast<std::size_t>(p)]) {
      for (int ch = 0; ch < c; ++ch) out[ch * plane + p] = spec.fill_value;
    }
  }
  return out;
}

Tensor mask_batch(const Tensor& images, const MaskSpec& spec, Rng& rng) {
  if (images.ndim() != 4) throw ValidationError("mask_batch: images must be [N,C,H,W]");
  const int n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const std::size_t volume = static_cast<std::size_t>(c) * h * w;
  Tensor out = images;
  for (int i = 0; i < n; ++i) {
    Tensor sample({c, h, w});
    std::copy(images.data() + i * volume, images.data() + (i + 1) * volume, sample.data());
    MaskMap mask = generate_mask(spec, h, w, rng);
    Tensor masked = apply_mask(sample, mask, spec, rng);
    std::copy(masked.data(), masked.data() + volume, out.data() + i * volume);
  }
  return out;
}

}  // namespace synood
