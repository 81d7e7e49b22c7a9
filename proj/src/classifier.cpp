#include "synood/classifier.hpp"

#include <algorithm>
#include <memory>
#include <numeric>

#include "synood/error.hpp"

namespace synood {

namespace {

ResNetTrunk::Block make_block(ParamStore& ps, const std::string& prefix, int in_ch, int out_ch,
                              bool down, Rng& rng) {
  ResNetTrunk::Block blk;
  blk.down = down;
  blk.projected = down || in_ch != out_ch;
  blk.c1 = Conv2d::create(ps, prefix + ".c1", in_ch, out_ch, 3, down ? 2 : 1, 1, rng);
  blk.c2 = Conv2d::create(ps, prefix + ".c2", out_ch, out_ch, 3, 1, 1, rng);
  if (blk.projected) {
    blk.skip = Conv2d::create(ps, prefix + ".skip", in_ch, out_ch, 1, down ? 2 : 1, 0, rng);
  }
  return blk;
}

}  // namespace

VarPtr ResNetTrunk::Block::forward(VarPtr x) const {
  VarPtr h = c2(leaky_relu(c1(x), kLeakySlope));
  VarPtr s = projected ? skip(x) : x;
  return leaky_relu(add(h, s), kLeakySlope);
}

ResNetTrunk ResNetTrunk::create(ParamStore& ps, const std::string& prefix, int in_channels,
                                int base_channels, Rng& rng) {
  if (in_channels < 1 || base_channels < 1) {
    throw ValidationError("ResNetTrunk: channel counts must be positive");
  }
  ResNetTrunk trunk;
  const int c = base_channels;
  trunk.stem = Conv2d::create(ps, prefix + ".stem", in_channels, c, 3, 1, 1, rng);
  trunk.blk1 = make_block(ps, prefix + ".blk1", c, 2 * c, /*down=*/true, rng);       // 32 -> 16
  trunk.blk2 = make_block(ps, prefix + ".blk2", 2 * c, 4 * c, /*down=*/true, rng);   // 16 -> 8
  trunk.blk3 = make_block(ps, prefix + ".blk3", 4 * c, 4 * c, /*down=*/false, rng);  // 8
  trunk.blk4 = make_block(ps, prefix + ".blk4", 4 * c, 4 * c, /*down=*/false, rng);  // 8
  trunk.feature_dim = 4 * c;
  return trunk;
}

VarPtr ResNetTrunk::forward(VarPtr x) const {
  VarPtr h = leaky_relu(stem(x), kLeakySlope);
  h = blk1.forward(h);
  h = blk2.forward(h);
  h = blk3.forward(h);
  h = blk4.forward(h);
  return global_avg_pool(h);
}

ClassifierModel::ClassifierModel(const ClassifierConfig& config, Rng& init_rng)
    : config_(config) {
  if (config.class_count < 2) {
    throw ValidationError("ClassifierModel: class_count must be at least 2");
  }
  if (config.channels < 1) {
    throw ValidationError("ClassifierModel: channels must be positive");
  }
  trunk_ = ResNetTrunk::create(params_, "cls.trunk", 3, config.channels, init_rng);
  head_ = Linear::create(params_, "cls.head", trunk_.feature_dim, config.class_count, init_rng);
}

VarPtr ClassifierModel::logits_graph(VarPtr x) const {
  const Tensor& t = x->val;
  if (t.ndim() != 4 || t.dim(1) != 3) {
    throw ValidationError("ClassifierModel: input must be [N,3,H,W]");
  }
  return head_(trunk_.forward(x));
}

Tensor ClassifierModel::logits(const Tensor& batch) const {
  VarPtr out = logits_graph(constant(batch));
  if (!out->val.all_finite()) {
    throw NumericError("ClassifierModel: logits are non-finite");
  }
  return out->val;
}

int ClassifierModel::predict(const Tensor& pixels, Tensor* logits_out) const {
  if (pixels.ndim() != 3 || pixels.dim(0) != 3) {
    throw ValidationError("ClassifierModel::predict: input must be [3,H,W]");
  }
  Tensor batch = pixels.reshaped({1, pixels.dim(0), pixels.dim(1), pixels.dim(2)});
  Tensor row = logits(batch);
  if (logits_out != nullptr) {
    *logits_out = row.reshaped({config_.class_count});
  }
  int best = 0;
  for (int k = 1; k < config_.class_count; ++k) {
    if (row[static_cast<std::size_t>(k)] > row[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

std::vector<int> ClassifierModel::predict_batch(const Tensor& batch) const {
  Tensor out = logits(batch);
  const int n = out.dim(0);
  const int k = out.dim(1);
  std::vector<int> preds(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j) {
      if (out[static_cast<std::size_t>(i * k + j)] > out[static_cast<std::size_t>(i * k + best)]) {
        best = j;
      }
    }
    preds[static_cast<std::size_t>(i)] = best;
  }
  return preds;
}

double accuracy(const ClassifierModel& model, const Dataset& dataset) {
  if (dataset.items.empty()) {
    throw ValidationError("accuracy: dataset is empty");
  }
  const std::size_t chunk = 64;
  int correct = 0;
  for (std::size_t begin = 0; begin < dataset.items.size(); begin += chunk) {
    const std::size_t end = std::min(dataset.items.size(), begin + chunk);
    std::vector<int> idx(end - begin);
    std::iota(idx.begin(), idx.end(), static_cast<int>(begin));
    Batch batch = gather_batch(dataset, idx);
    std::vector<int> preds = model.predict_batch(batch.images);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (batch.labels[i] < 0) {
        throw ValidationError("accuracy: dataset contains unlabeled items");
      }
      if (preds[i] == batch.labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.items.size());
}

std::vector<LabeledImage> pseudo_label(const ClassifierModel& classifier,
                                       std::vector<LabeledImage> items) {
  if (!classifier.trained()) {
    throw StateError("pseudo_label: classifier has not been trained");
  }
  return pseudo_label(
      [&classifier](const Tensor& pixels) { return classifier.predict(pixels); },
      std::move(items));
}

}  // namespace synood
