#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "synood/image.hpp"

namespace synood {

// Binary record file: little-endian header {magic "MDC1", u32 count, u32 H,
// u32 W, u32 C, u32 K}, then per record {u32 label (0xFFFFFFFF = unlabeled),
// H*W*C bytes of u8 pixels row-major, channel-last}.
inline constexpr std::uint32_t kUnlabeledSentinel = 0xFFFFFFFFu;

struct RecordHeader {
  std::uint32_t count = 0;
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t c = 0;
  std::uint32_t class_count = 0;
};

struct RecordFile {
  RecordHeader header;
  std::vector<std::uint32_t> labels;  // one per image, may be the sentinel
  std::vector<ImageU8> images;
};

void write_records(const std::string& path, const RecordFile& file);
RecordFile read_records(const std::string& path);
RecordHeader read_record_header(const std::string& path);

}  // namespace synood
