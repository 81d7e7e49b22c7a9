#include "synood/discriminator.hpp"

#include <string>

#include "synood/error.hpp"

namespace synood {

DiscriminatorModel::DiscriminatorModel(const DiscriminatorConfig& config, Rng& init_rng)
    : config_(config) {
  if (config.class_count < 1) {
    throw ValidationError("discriminator: class_count must be >= 1");
  }
  const int c = config.channels;
  const int k = config.class_count;
  d0_ = Conv2d::create(params_, "down0", 3, c, 3, 1, 1, init_rng);
  d1_ = Conv2d::create(params_, "down1", c, 2 * c, 3, 2, 1, init_rng);
  d2_ = Conv2d::create(params_, "down2", 2 * c, 4 * c, 3, 2, 1, init_rng);
  d3_ = Conv2d::create(params_, "down3", 4 * c, 4 * c, 3, 2, 1, init_rng);
  enc_head_ = Linear::create(params_, "enc_head", 4 * c, 1, init_rng);
  proj_embed_ = Embedding::create(params_, "proj_embed", k, 4 * c, init_rng);
  u2_ = Conv2d::create(params_, "up2", 4 * c + 4 * c, 2 * c, 3, 1, 1, init_rng);
  u1_ = Conv2d::create(params_, "up1", 2 * c + 2 * c, c, 3, 1, 1, init_rng);
  u0_ = Conv2d::create(params_, "up0", c + c, c, 3, 1, 1, init_rng);
  dec_head_ = Conv2d::create(params_, "dec_head", c, 1, 3, 1, 1, init_rng);
}

UNetDiscOutput DiscriminatorModel::discriminate_graph(VarPtr x,
                                                      const std::vector<int>& labels) const {
  if (x->val.ndim() != 4 || x->val.dim(1) != 3 || x->val.dim(2) != 32 ||
      x->val.dim(3) != 32) {
    throw ValidationError("discriminate: expected [N,3,32,32] input");
  }
  if (static_cast<int>(labels.size()) != x->val.dim(0)) {
    throw ValidationError("discriminate: label count does not match batch");
  }
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= config_.class_count) {
      throw ValidationError("discriminate: label out of range [0," +
                            std::to_string(config_.class_count) + ")");
    }
  }

  // Encoder path with skip taps at every resolution.
  VarPtr s32 = leaky_relu(d0_(x), kLeakySlope);     // [N,c,32,32]
  VarPtr s16 = leaky_relu(d1_(s32), kLeakySlope);   // [N,2c,16,16]
  VarPtr s8 = leaky_relu(d2_(s16), kLeakySlope);    // [N,4c,8,8]
  VarPtr s4 = leaky_relu(d3_(s8), kLeakySlope);     // [N,4c,4,4]

  // Scalar head: linear + projection of the label embedding onto the globally
  // pooled features.
  VarPtr pooled = global_sum_pool(s4);  // [N,4c]
  UNetDiscOutput out;
  out.enc_logit = add(enc_head_(pooled), rowwise_dot(proj_embed_(labels), pooled));

  // Decoder path with skip connections (unconditioned).
  VarPtr h = leaky_relu(u2_(concat_channels(upsample2x(s4), s8)), kLeakySlope);   // 8
  h = leaky_relu(u1_(concat_channels(upsample2x(h), s16)), kLeakySlope);          // 16
  h = leaky_relu(u0_(concat_channels(upsample2x(h), s32)), kLeakySlope);          // 32
  out.dec_logits = dec_head_(h);  // [N,1,32,32]
  return out;
}

DiscriminatorModel::Output DiscriminatorModel::discriminate(
    const Tensor& batch, const std::vector<int>& labels) const {
  UNetDiscOutput nodes = discriminate_graph(constant(batch), labels);
  return Output{nodes.enc_logit->val, nodes.dec_logits->val};
}

}  // namespace synood
