#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "synood/rng.hpp"
#include "synood/tensor.hpp"

namespace synood {

class ClassifierModel;

enum class Source { IN_D_TRAIN, IN_D_VAL, IN_D_TEST, OOD_TEST, EXTERNAL_UNLABELED };

// Sentinel for images without a class label (OOD / external-unlabeled).
inline constexpr int kUnlabeled = -1;

struct LabeledImage {
  Tensor pixels;  // [3,H,W], values in [0,1]
  int label = kUnlabeled;
  Source source = Source::IN_D_TRAIN;
  std::string origin;  // file path or record index, for error messages
};

struct Dataset {
  std::string name;
  int class_count = 0;
  std::vector<LabeledImage> items;

  int size() const { return static_cast<int>(items.size()); }
};

struct DatasetManifest {
  std::string name;
  std::string root;  // record file, or directory of class subdirectories
  int image_count = 0;
  int class_count = 0;
  std::array<double, 3> split_fractions{0.8, 0.1, 0.1};
};

// Loads a record file or a PNG class-directory tree, scaled to [0,1] and
// resized to 32x32 when needed. `default_source` tags every item; In-D
// loads are re-tagged by split(). With strict=false, undecodable files are
// skipped with a warning instead of failing the whole load.
Dataset load_dataset(const DatasetManifest& manifest, Source default_source,
                     bool strict = true);

// Seeded disjoint partition covering the dataset; re-tags item sources to
// IN_D_TRAIN / IN_D_VAL / IN_D_TEST.
struct SplitResult {
  Dataset train, val, test;
};
SplitResult split(const Dataset& dataset, const std::array<double, 3>& fractions,
                  std::uint64_t seed);

// Seeded epoch shuffling; the final partial batch is included. next() wraps
// to a freshly shuffled epoch when the current one is exhausted.
class BatchIterator {
 public:
  BatchIterator(int dataset_size, int batch_size, std::uint64_t seed);
  std::vector<int> next();
  int epoch() const { return epoch_; }

 private:
  void reshuffle();
  int n_;
  int batch_size_;
  std::uint64_t seed_;
  int epoch_ = -1;
  std::size_t cursor_ = 0;
  std::vector<int> order_;
};

// Replaces each item's label with `predict`'s argmax class; source tags are
// preserved. The ClassifierModel overload (classifier.cpp) requires a
// trained model.
std::vector<LabeledImage> pseudo_label(const std::function<int(const Tensor&)>& predict,
                                       std::vector<LabeledImage> items);
std::vector<LabeledImage> pseudo_label(const ClassifierModel& classifier,
                                       std::vector<LabeledImage> items);

// Packs items[indices] into one [N,3,H,W] batch tensor plus labels.
struct Batch {
  Tensor images;            // [N,3,H,W]
  std::vector<int> labels;  // N entries
};
Batch gather_batch(const Dataset& dataset, const std::vector<int>& indices);

}  // namespace synood
