#include "synood/toydata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "synood/error.hpp"

namespace synood {

namespace {

constexpr int kSize = 32;
constexpr int kSubsamples = 3;  // anti-aliasing grid per pixel side

enum class Family { DISC, SQUARE, TRIANGLE, RING, CROSS };

struct ShapeParams {
  Family family;
  double cx, cy, radius;
  double color[3];
  double background;
};

// Point-in-shape predicates operate in pixel coordinates.
bool inside(Family f, double x, double y, const ShapeParams& p) {
  const double dx = x - p.cx, dy = y - p.cy;
  switch (f) {
    case Family::DISC:
      return dx * dx + dy * dy <= p.radius * p.radius;
    case Family::SQUARE: {
      const double s = p.radius * 0.85;
      return std::abs(dx) <= s && std::abs(dy) <= s;
    }
    case Family::TRIANGLE: {
      // Upward triangle inscribed in the radius.
      const double r = p.radius;
      if (dy < -r || dy > r * 0.8) return false;
      const double half_width = (dy + r) / (1.8 * r) * r;
      return std::abs(dx) <= half_width;
    }
    case Family::RING: {
      const double d2 = dx * dx + dy * dy;
      const double outer = p.radius, inner = p.radius * 0.55;
      return d2 <= outer * outer && d2 >= inner * inner;
    }
    case Family::CROSS: {
      const double arm = p.radius, thick = p.radius * 0.32;
      return (std::abs(dx) <= thick && std::abs(dy) <= arm) ||
             (std::abs(dy) <= thick && std::abs(dx) <= arm);
    }
  }
  return false;
}

// Fractional pixel coverage via a subsample grid.
double coverage(Family f, int px, int py, const ShapeParams& p) {
  int hits = 0;
  for (int sy = 0; sy < kSubsamples; ++sy) {
    for (int sx = 0; sx < kSubsamples; ++sx) {
      const double x = px + (sx + 0.5) / kSubsamples;
      const double y = py + (sy + 0.5) / kSubsamples;
      if (inside(f, x, y, p)) ++hits;
    }
  }
  return static_cast<double>(hits) / (kSubsamples * kSubsamples);
}

// Class-correlated palettes; OOD shapes draw uniformly from the same union of
// palettes so color carries no OOD signal.
void sample_color(int palette, Rng& rng, double out[3]) {
  const double u = rng.uniform(0.0, 1.0);
  switch (palette) {
    case 0:  // warm reds
      out[0] = 0.70 + 0.25 * u;
      out[1] = 0.12 + 0.18 * rng.uniform(0.0, 1.0);
      out[2] = 0.08 + 0.12 * rng.uniform(0.0, 1.0);
      break;
    case 1:  // cool blues
      out[0] = 0.08 + 0.12 * rng.uniform(0.0, 1.0);
      out[1] = 0.15 + 0.20 * rng.uniform(0.0, 1.0);
      out[2] = 0.70 + 0.25 * u;
      break;
    default:  // greens
      out[0] = 0.10 + 0.15 * rng.uniform(0.0, 1.0);
      out[1] = 0.65 + 0.25 * u;
      out[2] = 0.12 + 0.15 * rng.uniform(0.0, 1.0);
      break;
  }
}

ImageU8 render(const ShapeParams& p, Rng& rng) {
  ImageU8 img;
  img.h = kSize;
  img.w = kSize;
  img.c = 3;
  img.data.resize(static_cast<std::size_t>(kSize) * kSize * 3);
  for (int y = 0; y < kSize; ++y) {
    for (int x = 0; x < kSize; ++x) {
      const double a = coverage(p.family, x, y, p);
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = rng.normal(0.0, 0.01);
        const double v =
            std::clamp(p.background * (1.0 - a) + p.color[ch] * a + noise, 0.0, 1.0);
        img.data[(static_cast<std::size_t>(y) * kSize + x) * 3 + ch] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

ShapeParams sample_params(Family family, int palette, Rng& rng) {
  ShapeParams p;
  p.family = family;
  p.cx = rng.uniform(13.0, 19.0);
  p.cy = rng.uniform(13.0, 19.0);
  p.radius = rng.uniform(6.0, 10.0);
  p.background = rng.uniform(0.05, 0.22);
  sample_color(palette, rng, p.color);
  return p;
}

Family in_d_family(int cls) {
  switch (cls) {
    case 0: return Family::DISC;
    case 1: return Family::SQUARE;
    default: return Family::TRIANGLE;
  }
}

RecordFile make_file(std::uint32_t class_count) {
  RecordFile f;
  f.header.h = kSize;
  f.header.w = kSize;
  f.header.c = 3;
  f.header.class_count = class_count;
  return f;
}

}  // namespace

ToyData make_toy_shapes(const ToyDataConfig& config) {
  if (config.class_count < 2 || config.class_count > 3) {
    throw ValidationError("toy shapes: class_count must be 2 or 3");
  }
  if (config.count <= 0 || config.ood_count < 0 || config.external_count < 0) {
    throw ValidationError("toy shapes: counts must be positive");
  }
  const int k = config.class_count;
  ToyData data;
  data.in_d = make_file(static_cast<std::uint32_t>(k));
  data.ood = make_file(static_cast<std::uint32_t>(k));
  data.external = make_file(static_cast<std::uint32_t>(k));

  {
    Rng rng(Rng::stream_seed(config.seed, "toy-in-d"));
    for (int i = 0; i < config.count; ++i) {
      const int cls = i % k;  // balanced classes
      ShapeParams p = sample_params(in_d_family(cls), cls, rng);
      data.in_d.images.push_back(render(p, rng));
      data.in_d.labels.push_back(static_cast<std::uint32_t>(cls));
    }
    data.in_d.header.count = static_cast<std::uint32_t>(config.count);
  }
  {
    Rng rng(Rng::stream_seed(config.seed, "toy-ood"));
    for (int i = 0; i < config.ood_count; ++i) {
      const Family family = (i % 2 == 0) ? Family::RING : Family::CROSS;
      const int palette = static_cast<int>(rng.uniform_int(0, k - 1));
      ShapeParams p = sample_params(family, palette, rng);
      data.ood.images.push_back(render(p, rng));
      data.ood.labels.push_back(kUnlabeledSentinel);
    }
    data.ood.header.count = static_cast<std::uint32_t>(config.ood_count);
  }
  if (config.external_count > 0) {
    Rng rng(Rng::stream_seed(config.seed, "toy-external"));
    for (int i = 0; i < config.external_count; ++i) {
      // Unlabeled mixture: half In-D-like shapes, half OOD-like shapes.
      Family family;
      int palette = static_cast<int>(rng.uniform_int(0, k - 1));
      if (i % 2 == 0) {
        family = in_d_family(palette);
      } else {
        family = (rng.uniform_int(0, 1) == 0) ? Family::RING : Family::CROSS;
      }
      ShapeParams p = sample_params(family, palette, rng);
      data.external.images.push_back(render(p, rng));
      data.external.labels.push_back(kUnlabeledSentinel);
    }
    data.external.header.count = static_cast<std::uint32_t>(config.external_count);
  }
  return data;
}

void write_toy_shapes(const ToyDataConfig& config, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  ToyData data = make_toy_shapes(config);
  const std::filesystem::path dir(out_dir);
  write_records((dir / "in_d.bin").string(), data.in_d);
  write_records((dir / "ood.bin").string(), data.ood);
  if (data.external.header.count > 0) {
    write_records((dir / "external.bin").string(), data.external);
  }
}

}  // namespace synood
