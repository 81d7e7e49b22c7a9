#include "synood/record_io.hpp"

#include <cstring>
#include <fstream>

#include "synood/error.hpp"

namespace synood {

namespace {

constexpr char kMagic[4] = {'M', 'D', 'C', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  // This codebase targets little-endian hosts; bytes go out as stored.
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) {
    throw IoError("truncated record file: " + path);
  }
  return v;
}

}  // namespace

void write_records(const std::string& path, const RecordFile& file) {
  const RecordHeader& hd = file.header;
  if (file.labels.size() != file.images.size() || file.labels.size() != hd.count) {
    throw ValidationError("write_records: header count disagrees with payload");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, hd.count);
  write_u32(os, hd.h);
  write_u32(os, hd.w);
  write_u32(os, hd.c);
  write_u32(os, hd.class_count);
  const std::size_t pixel_bytes =
      static_cast<std::size_t>(hd.h) * hd.w * hd.c;
  for (std::uint32_t i = 0; i < hd.count; ++i) {
    const ImageU8& img = file.images[i];
    if (img.h != static_cast<int>(hd.h) || img.w != static_cast<int>(hd.w) ||
        img.c != static_cast<int>(hd.c)) {
      throw ValidationError("write_records: image shape disagrees with header");
    }
    write_u32(os, file.labels[i]);
    os.write(reinterpret_cast<const char*>(img.data.data()),
             static_cast<std::streamsize>(pixel_bytes));
  }
  if (!os) throw IoError("write failed: " + path);
}

RecordHeader read_record_header(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open record file: " + path);
  char magic[4];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, 4) != 0) {
    throw IoError("not a record file (bad magic): " + path);
  }
  RecordHeader hd;
  hd.count = read_u32(is, path);
  hd.h = read_u32(is, path);
  hd.w = read_u32(is, path);
  hd.c = read_u32(is, path);
  hd.class_count = read_u32(is, path);
  if (hd.h == 0 || hd.w == 0 || hd.c == 0) {
    throw IoError("record file declares an empty image shape: " + path);
  }
  return hd;
}

RecordFile read_records(const std::string& path) {
  RecordFile file;
  file.header = read_record_header(path);
  std::ifstream is(path, std::ios::binary);
  is.seekg(4 + 5 * static_cast<std::streamoff>(sizeof(std::uint32_t)));
  const RecordHeader& hd = file.header;
  const std::size_t pixel_bytes = static_cast<std::size_t>(hd.h) * hd.w * hd.c;
  file.labels.reserve(hd.count);
  file.images.reserve(hd.count);
  for (std::uint32_t i = 0; i < hd.count; ++i) {
    file.labels.push_back(read_u32(is, path));
    ImageU8 img;
    img.h = static_cast<int>(hd.h);
    img.w = static_cast<int>(hd.w);
    img.c = static_cast<int>(hd.c);
    img.data.resize(pixel_bytes);
    if (!is.read(reinterpret_cast<char*>(img.data.data()),
                 static_cast<std::streamsize>(pixel_bytes))) {
      throw IoError("truncated record file: " + path);
    }
    file.images.push_back(std::move(img));
  }
  return file;
}

}  // namespace synood
