#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>

namespace synood {

// All randomness in the project flows from one global seed through named
// sub-streams, so e.g. reshuffling the data stream never perturbs model
// initialization. A sub-stream is identified by a name plus optional
// integer qualifiers (epoch, sample index, ...).
class Rng {
 public:
  Rng() : engine_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static std::uint64_t stream_seed(std::uint64_t global_seed, std::string_view name,
                                   std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the qualifiers
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    mix(global_seed);
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    mix(a);
    mix(b);
    return h;
  }

  static Rng stream(std::uint64_t global_seed, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(stream_seed(global_seed, name, a, b));
  }

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(engine_);
  }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

 private:
  std::mt19937_64 engine_;
};

// Uniform draw from {0..class_count-1} \ {excluded}. Used when pairing a
// sample with a synthesis under a deliberately wrong label.
inline int sample_mismatched_label(Rng& rng, int class_count, int excluded) {
  int v = static_cast<int>(rng.uniform_int(0, class_count - 2));
  return v >= excluded ? v + 1 : v;
}

}  // namespace synood
