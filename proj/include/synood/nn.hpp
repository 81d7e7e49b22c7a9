#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "synood/autodiff.hpp"
#include "synood/rng.hpp"
#include "synood/tensor.hpp"

namespace synood {

// Slope shared by every LeakyReLU in the models.
inline constexpr double kLeakySlope = 0.2;

// Named registry of trainable leaves. Models build their layers through one
// store so optimizers and checkpoints see a stable, ordered parameter list.
class ParamStore {
 public:
  VarPtr create(const std::string& name, Tensor init);
  const std::vector<std::pair<std::string, VarPtr>>& entries() const { return items_; }
  std::vector<VarPtr> vars() const;
  VarPtr find(const std::string& name) const;  // nullptr when absent
  std::int64_t param_count() const;
  void zero_grad();
  // Order-insensitive checksum of all parameter values (used by tests that
  // assert a training step left a model untouched).
  double value_checksum() const;

 private:
  std::vector<std::pair<std::string, VarPtr>> items_;
};

// He-style initializers (fan_in scaling, suited to the leaky-ReLU family).
Tensor conv_weight_init(int oc, int ic, int kh, int kw, Rng& rng);
Tensor linear_weight_init(int in_dim, int out_dim, Rng& rng);

struct Conv2d {
  VarPtr w;  // [OC,IC,K,K]
  VarPtr b;  // [OC]
  int stride = 1;
  int pad = 1;

  static Conv2d create(ParamStore& ps, const std::string& name, int ic, int oc, int k,
                       int stride, int pad, Rng& rng);
  VarPtr operator()(VarPtr x) const { return conv2d(std::move(x), w, b, stride, pad); }
};

struct Linear {
  VarPtr w;  // [IN,OUT]
  VarPtr b;  // [OUT]

  static Linear create(ParamStore& ps, const std::string& name, int in_dim, int out_dim,
                       Rng& rng);
  VarPtr operator()(VarPtr x) const { return add_rowvec(matmul(std::move(x), w), b); }
};

struct Embedding {
  VarPtr table;  // [K,D]

  static Embedding create(ParamStore& ps, const std::string& name, int k, int d, Rng& rng,
                          double mean = 0.0, double stddev = 0.1);
  VarPtr operator()(const std::vector<int>& labels) const { return embed(table, labels); }
};

// Class-conditional normalization: per-(sample,channel) spatial normalization
// followed by a scale and shift looked up from per-class embedding tables.
struct CondNorm {
  Embedding gamma;  // [K,C], initialized near 1
  Embedding beta;   // [K,C], initialized near 0

  static CondNorm create(ParamStore& ps, const std::string& name, int k, int c, Rng& rng);
  VarPtr operator()(VarPtr x, const std::vector<int>& labels) const;
};

}  // namespace synood
