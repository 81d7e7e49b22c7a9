#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synood/rng.hpp"
#include "synood/tensor.hpp"

namespace synood {

enum class MaskStyle { NONE, RANDOMLY, FIXED_LOW, FIXED_HIGH, PATCHED, SHUFFLING };

const char* mask_style_name(MaskStyle style);          // lowercase, e.g. "randomly"
MaskStyle mask_style_from_name(const std::string& s);  // throws ValidationError

struct MaskSpec {
  MaskStyle style = MaskStyle::RANDOMLY;
  double ratio_low = 0.1;
  double ratio_high = 0.3;
  int patch_size = 4;
  double fill_value = 0.0;
};

struct MaskMap {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> bits;  // row-major, 1 = masked
  double realized_ratio = 0.0;

  std::uint8_t at(int r, int c) const { return bits[static_cast<std::size_t>(r) * w + c]; }
};

// Draws a mask for one image. RANDOMLY picks a target ratio uniformly in
// [ratio_low, ratio_high]; FIXED_LOW / FIXED_HIGH use ratio_low / ratio_high;
// PATCHED targets ratio_high with axis-aligned non-overlapping tiles.
// SHUFFLING and NONE return the all-zero mask (shuffling acts in apply_mask).
MaskMap generate_mask(const MaskSpec& spec, int h, int w, Rng& rng);

// Sets masked positions to fill_value in every channel. For SHUFFLING the rng
// drives one spatial permutation applied identically to all channels.
Tensor apply_mask(const Tensor& pixels /* [C,H,W] */, const MaskMap& mask,
                  const MaskSpec& spec, Rng& rng);

// Draws and applies an independent mask for every sample of a batch.
Tensor mask_batch(const Tensor& images /* [N,C,H,W] */, const MaskSpec& spec, Rng& rng);

}  // namespace synood
