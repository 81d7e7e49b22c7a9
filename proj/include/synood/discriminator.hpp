#pragma once

#include <vector>

#include "synood/autodiff.hpp"
#include "synood/losses.hpp"
#include "synood/nn.hpp"
#include "synood/rng.hpp"

namespace synood {

struct DiscriminatorConfig {
  int class_count = 2;
  int channels = 32;  // width of the first stage
};

// U-Net discriminator: the encoder path downsamples to a scalar real/fake
// logit (label-conditioned through a projection term); the decoder path
// upsamples with skip connections to a per-pixel logit map. The decoder path
// is unconditioned.
class DiscriminatorModel {
 public:
  DiscriminatorModel(const DiscriminatorConfig& config, Rng& init_rng);

  // x: [N,3,32,32]; returns enc_logit [N,1] and dec_logits [N,1,32,32].
  UNetDiscOutput discriminate_graph(VarPtr x, const std::vector<int>& labels) const;

  struct Output {
    Tensor enc_logit;   // [N,1]
    Tensor dec_logits;  // [N,1,H,W]
  };
  Output discriminate(const Tensor& batch, const std::vector<int>& labels) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  ParamStore params_;
  Conv2d d0_, d1_, d2_, d3_;  // 32 -> 32 -> 16 -> 8 -> 4
  Linear enc_head_;
  Embedding proj_embed_;
  Conv2d u2_, u1_, u0_, dec_head_;  // 4 -> 8 -> 16 -> 32 -> logit map
};

}  // namespace synood
