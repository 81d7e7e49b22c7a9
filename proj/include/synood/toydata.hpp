#pragma once

#include <cstdint>
#include <string>

#include "synood/dataset.hpp"
#include "synood/record_io.hpp"

namespace synood {

// Synthetic 32x32 shapes benchmark. In-D classes are colored geometric shape
// families (disc, square, triangle); the toy-OOD set uses a disjoint family
// (rings and crosses) drawn from the same color palette so that shape, not
// color, separates the distributions.
struct ToyDataConfig {
  int class_count = 2;  // up to 3 In-D families
  int count = 2000;     // In-D images
  int ood_count = 500;
  int external_count = 0;  // unlabeled mixture of In-D-like and OOD-like shapes
  std::uint64_t seed = 1;
};

struct ToyData {
  RecordFile in_d;
  RecordFile ood;
  RecordFile external;  // empty when external_count == 0
};

ToyData make_toy_shapes(const ToyDataConfig& config);

// Writes in_d.bin / ood.bin (and external.bin when requested) under out_dir.
void write_toy_shapes(const ToyDataConfig& config, const std::string& out_dir);

}  // namespace synood
