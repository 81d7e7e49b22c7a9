#pragma once

#include <vector>

#include "synood/autodiff.hpp"
#include "synood/masking.hpp"
#include "synood/nn.hpp"
#include "synood/rng.hpp"
#include "synood/tensor.hpp"

namespace synood {

struct GeneratorConfig {
  int class_count = 2;
  int latent_dim = 128;
  int channel_mult = 32;  // width unit of encoder and decoder
  // Whether the encoder also receives the label (the decoder always does).
  bool encoder_conditioned = false;
  int label_embed_dim = 32;  // only used when encoder_conditioned
};

// Batched latent codes; z = mu + exp(0.5 * log_var) * eps in training mode,
// z = mu in deterministic inference mode.
struct LatentCode {
  Tensor mu;       // [N,latent]
  Tensor log_var;  // [N,latent]
  Tensor z;        // [N,latent]
  Tensor eps;      // the recorded standard-normal draw ([N,latent], zeros in
                   // deterministic mode)
};

struct SynthesisPair {
  Tensor x;  // [3,H,W] original
  int label = 0;
  Tensor x_prime;  // [3,32,32] synthesis
  MaskMap mask;
};

// Conditional encoder-decoder synthesis model: a four-conv encoder with two
// fully-connected heads produces a KL-regularized latent; a residual
// up-sampling decoder with class-conditional normalization maps it back to
// a 3x32x32 image in [0,1].
class GeneratorModel {
 public:
  GeneratorModel(const GeneratorConfig& config, Rng& init_rng);

  struct EncodeNodes {
    VarPtr mu, log_var, z;
    Tensor eps;
  };
  // Graph-building passes (used by training; inputs may carry gradients).
  // labels are only consulted when encoder_conditioned; eps_override, when
  // given, replaces the rng draw (and must be [N,latent]).
  EncodeNodes encode_graph(VarPtr x, const std::vector<int>& labels, bool deterministic,
                           Rng* rng, const Tensor* eps_override = nullptr) const;
  VarPtr decode_graph(VarPtr z, const std::vector<int>& labels) const;

  // Forward-only convenience on plain tensors ([N,3,32,32] / [N,latent]).
  LatentCode encode(const Tensor& batch, const std::vector<int>& labels,
                    bool deterministic, Rng* rng) const;
  Tensor decode(const Tensor& z, const std::vector<int>& labels) const;

  // Mask, encode, decode for a single [3,H,W] image per the full pipeline.
  SynthesisPair synthesize(const Tensor& x, int label, const MaskSpec& mask_spec,
                           Rng& rng, bool deterministic) const;

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const GeneratorConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  struct ResBlockUp {
    CondNorm n1, n2;
    Conv2d c1, c2, skip;
    VarPtr forward(VarPtr x, const std::vector<int>& labels) const;
  };

  GeneratorConfig config_;
  ParamStore params_;
  // Encoder
  Conv2d e1_, e2_, e3_, e4_;
  Embedding enc_embed_;  // only registered when encoder_conditioned
  Linear fc_mu_, fc_log_var_;
  // Decoder
  Linear fc_z_;
  ResBlockUp b1_, b2_, b3_;
  CondNorm out_norm_;
  Conv2d out_conv_;
  bool trained_ = false;
};

}  // namespace synood
