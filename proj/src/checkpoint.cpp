#include "synood/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <vector>

#include "synood/error.hpp"

namespace synood {

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("checkpoint '" + path + "' is truncated");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path) {
  const auto len = read_pod<std::uint64_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("checkpoint '" + path + "' is truncated");
  return s;
}

struct RawCheckpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> arrays;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw IoError("'" + path + "' is not a checkpoint file (bad magic)");
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint '" + path + "' has unsupported version " +
                  std::to_string(version));
  }
  RawCheckpoint raw;
  const std::string meta_text = read_string(in, path);
  try {
    raw.meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("checkpoint '" + path + "' has corrupt metadata: " + std::string(e.what()));
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  raw.arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(in, path);
    const auto ndim = read_pod<std::uint32_t>(in, path);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = read_pod<std::int32_t>(in, path);
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw IoError("checkpoint '" + path + "' is truncated");
    raw.arrays.emplace_back(std::move(name), std::move(t));
  }
  return raw;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params,
                     const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, 8);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_string(out, meta.dump());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [name, var] : params.entries()) {
    write_string(out, name);
    const Tensor& t = var->val;
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<std::int32_t>(out, t.dim(i));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed while writing checkpoint '" + path + "'");
}

nlohmann::json load_checkpoint(const std::string& path, ParamStore& params) {
  RawCheckpoint raw = read_raw(path);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : raw.arrays) {
    if (!by_name.emplace(name, &t).second) {
      throw IoError("checkpoint '" + path + "' has duplicate array '" + name + "'");
    }
  }
  if (by_name.size() != params.entries().size()) {
    throw ValidationError("checkpoint '" + path + "' holds " +
                          std::to_string(by_name.size()) + " arrays but the model has " +
                          std::to_string(params.entries().size()) + " parameters");
  }
  for (const auto& [name, var] : params.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ValidationError("checkpoint '" + path + "' is missing parameter '" + name + "'");
    }
    if (!it->second->same_shape(var->val)) {
      throw ValidationError("checkpoint '" + path + "' parameter '" + name +
                            "' has a mismatched shape");
    }
    var->val = *it->second;
  }
  return raw.meta;
}

nlohmann::json read_checkpoint_meta(const std::string& path) {
  return read_raw(path).meta;
}

}  // namespace synood
