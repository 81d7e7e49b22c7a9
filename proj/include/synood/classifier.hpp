#pragma once

#include <string>
#include <vector>

#include "synood/autodiff.hpp"
#include "synood/dataset.hpp"
#include "synood/nn.hpp"
#include "synood/rng.hpp"

namespace synood {

// Small residual backbone shared (as a blueprint) by the protected classifier
// and the conditional binary classifier: stem + 4 residual blocks, pooled to
// a feature vector of size 4 * base_channels.
struct ResNetTrunk {
  struct Block {
    Conv2d c1, c2, skip;
    bool down = false;
    bool projected = false;  // whether the skip path has a 1x1 conv
    VarPtr forward(VarPtr x) const;
  };

  Conv2d stem;
  Block blk1, blk2, blk3, blk4;
  int feature_dim = 0;

  static ResNetTrunk create(ParamStore& ps, const std::string& prefix, int in_channels,
                            int base_channels, Rng& rng);
  VarPtr forward(VarPtr x) const;  // [N,C,32,32] -> [N,feature_dim]
};

struct ClassifierConfig {
  int class_count = 2;
  int channels = 32;
};

// The protected K-way classifier C. Detection never modifies it; its logits
// must be bit-identical with and without the detector attached.
class ClassifierModel {
 public:
  ClassifierModel(const ClassifierConfig& config, Rng& init_rng);

  VarPtr logits_graph(VarPtr x) const;     // [N,K]
  Tensor logits(const Tensor& batch) const;  // forward-only, [N,K]
  // Single-image prediction; optionally returns the logit vector.
  int predict(const Tensor& pixels, Tensor* logits_out = nullptr) const;
  std::vector<int> predict_batch(const Tensor& batch) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const ClassifierConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  ClassifierConfig config_;
  ParamStore params_;
  ResNetTrunk trunk_;
  Linear head_;
  bool trained_ = false;
};

// Fraction of items whose argmax prediction matches the label.
double accuracy(const ClassifierModel& model, const Dataset& dataset);

}  // namespace synood
