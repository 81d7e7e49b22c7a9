#include "synood/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>

#include "synood/error.hpp"
#include "synood/image.hpp"
#include "synood/png_io.hpp"
#include "synood/record_io.hpp"

namespace synood {

namespace fs = std::filesystem;

namespace {

constexpr int kCanonicalSize = 32;

Tensor load_pixels(const ImageU8& img) {
  Tensor t = to_tensor(img);
  if (t.dim(1) != kCanonicalSize || t.dim(2) != kCanonicalSize) {
    t = bilinear_resize(t, kCanonicalSize, kCanonicalSize);
  }
  return t;
}

Dataset load_from_records(const DatasetManifest& manifest, Source source) {
  RecordFile file = read_records(manifest.root);
  if (manifest.class_count > 0 &&
      static_cast<int>(file.header.class_count) != manifest.class_count) {
    throw ValidationError("dataset '" + manifest.name + "': manifest declares " +
                          std::to_string(manifest.class_count) + " classes but file has " +
                          std::to_string(file.header.class_count));
  }
  if (manifest.image_count > 0 &&
      static_cast<int>(file.header.count) != manifest.image_count) {
    throw ValidationError("dataset '" + manifest.name + "': manifest declares " +
                          std::to_string(manifest.image_count) + " images but file has " +
                          std::to_string(file.header.count));
  }
  Dataset ds;
  ds.name = manifest.name;
  ds.class_count = static_cast<int>(file.header.class_count);
  ds.items.reserve(file.header.count);
  for (std::uint32_t i = 0; i < file.header.count; ++i) {
    LabeledImage item;
    item.pixels = load_pixels(file.images[i]);
    item.source = source;
    item.origin = manifest.root + "#" + std::to_string(i);
    if (file.labels[i] == kUnlabeledSentinel) {
      if (source != Source::EXTERNAL_UNLABELED && source != Source::OOD_TEST) {
        throw ValidationError("dataset '" + manifest.name +
                              "': unlabeled record in a labeled split at " + item.origin);
      }
      item.label = kUnlabeled;
    } else {
      if (static_cast<int>(file.labels[i]) >= ds.class_count) {
        throw ValidationError("dataset '" + manifest.name + "': label out of range at " +
                              item.origin);
      }
      item.label = static_cast<int>(file.labels[i]);
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

Dataset load_from_png_tree(const DatasetManifest& manifest, Source source, bool strict) {
  std::vector<std::string> class_names;
  for (const auto& entry : fs::directory_iterator(manifest.root)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty()) {
    throw ValidationError("dataset '" + manifest.name + "': no class directories under " +
                          manifest.root);
  }
  if (manifest.class_count > 0 &&
      static_cast<int>(class_names.size()) != manifest.class_count) {
    throw ValidationError("dataset '" + manifest.name + "': manifest declares " +
                          std::to_string(manifest.class_count) + " classes but tree has " +
                          std::to_string(class_names.size()));
  }
  Dataset ds;
  ds.name = manifest.name;
  ds.class_count = static_cast<int>(class_names.size());
  int discovered = 0;
  for (int cls = 0; cls < static_cast<int>(class_names.size()); ++cls) {
    std::vector<std::string> files;
    for (const auto& entry :
         fs::directory_iterator(fs::path(manifest.root) / class_names[cls])) {
      if (entry.is_regular_file() && entry.path().extension() == ".png") {
        files.push_back(entry.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    discovered += static_cast<int>(files.size());
    for (const std::string& path : files) {
      LabeledImage item;
      item.label = cls;
      item.source = source;
      item.origin = path;
      try {
        item.pixels = load_pixels(read_png(path));
      } catch (const IoError& e) {
        if (strict) throw;
        std::cerr << "warning: skipping undecodable image: " << e.what() << "\n";
        continue;
      }
      ds.items.push_back(std::move(item));
    }
  }
  if (manifest.image_count > 0 && discovered != manifest.image_count) {
    throw ValidationError("dataset '" + manifest.name + "': manifest declares " +
                          std::to_string(manifest.image_count) + " images but tree has " +
                          std::to_string(discovered));
  }
  return ds;
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest, Source default_source, bool strict) {
  if (!fs::exists(manifest.root)) {
    throw IoError("dataset root does not exist: " + manifest.root);
  }
  Dataset ds = fs::is_directory(manifest.root)
                   ? load_from_png_tree(manifest, default_source, strict)
                   : load_from_records(manifest, default_source);
  for (const LabeledImage& item : ds.items) {
    if (item.pixels.min() < 0.0 || item.pixels.max() > 1.0) {
      throw ValidationError("pixel out of [0,1] at " + item.origin);
    }
  }
  return ds;
}

SplitResult split(const Dataset& dataset, const std::array<double, 3>& fractions,
                  std::uint64_t seed) {
  double sum = 0.0;
  for (double f : fractions) {
    if (f <= 0.0 || f >= 1.0) {
      throw ValidationError("split: each fraction must lie strictly in (0,1)");
    }
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split: fractions must sum to 1");

  const int n = dataset.size();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(Rng::stream_seed(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  const int n_train = static_cast<int>(std::floor(fractions[0] * n + 1e-9));
  const int n_val = static_cast<int>(std::floor((fractions[0] + fractions[1]) * n + 1e-9)) -
                    n_train;

  SplitResult out;
  out.train.name = dataset.name + "/train";
  out.val.name = dataset.name + "/val";
  out.test.name = dataset.name + "/test";
  out.train.class_count = out.val.class_count = out.test.class_count = dataset.class_count;
  for (int i = 0; i < n; ++i) {
    LabeledImage item = dataset.items[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    if (i < n_train) {
      item.source = Source::IN_D_TRAIN;
      out.train.items.push_back(std::move(item));
    } else if (i < n_train + n_val) {
      item.source = Source::IN_D_VAL;
      out.val.items.push_back(std::move(item));
    } else {
      item.source = Source::IN_D_TEST;
      out.test.items.push_back(std::move(item));
    }
  }
  return out;
}

BatchIterator::BatchIterator(int dataset_size, int batch_size, std::uint64_t seed)
    : n_(dataset_size), batch_size_(batch_size), seed_(seed) {
  if (dataset_size <= 0) throw ValidationError("BatchIterator: empty dataset");
  if (batch_size <= 0) throw ValidationError("BatchIterator: batch_size must be >= 1");
  reshuffle();
}

void BatchIterator::reshuffle() {
  ++epoch_;
  cursor_ = 0;
  order_.resize(static_cast<std::size_t>(n_));
  std::iota(order_.begin(), order_.end(), 0);
  Rng rng(Rng::stream_seed(seed_, "epoch", static_cast<std::uint64_t>(epoch_)));
  rng.shuffle(order_.begin(), order_.end());
}

std::vector<int> BatchIterator::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t end = std::min(cursor_ + static_cast<std::size_t>(batch_size_),
                                   order_.size());
  std::vector<int> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                         order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

std::vector<LabeledImage> pseudo_label(const std::function<int(const Tensor&)>& predict,
                                       std::vector<LabeledImage> items) {
  for (LabeledImage& item : items) item.label = predict(item.pixels);
  return items;
}

Batch gather_batch(const Dataset& dataset, const std::vector<int>& indices) {
  if (indices.empty()) throw ValidationError("gather_batch: empty index list");
  const Tensor& first = dataset.items[static_cast<std::size_t>(indices[0])].pixels;
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Batch batch;
  batch.images = Tensor({static_cast<int>(indices.size()), c, h, w});
  batch.labels.reserve(indices.size());
  const std::int64_t stride = static_cast<std::int64_t>(c) * h * w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const LabeledImage& item = dataset.items[static_cast<std::size_t>(indices[i])];
    if (item.pixels.size() != stride) {
      throw ValidationError("gather_batch: inconsistent image shapes");
    }
    std::copy(item.pixels.data(), item.pixels.data() + stride,
              batch.images.data() + static_cast<std::int64_t>(i) * stride);
    batch.labels.push_back(item.label);
  }
  return batch;
}

}  // namespace synood
