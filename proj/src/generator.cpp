#include "synood/generator.hpp"

#include <string>

#include "synood/error.hpp"

namespace synood {

namespace {

constexpr int kImageSize = 32;
constexpr int kBottleneck = 4;  // spatial size after the encoder / before the decoder

void check_labels(const std::vector<int>& labels, int k, const char* op) {
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= k) {
      throw ValidationError(std::string(op) + ": label out of range [0," +
                            std::to_string(k) + ")");
    }
  }
}

void check_finite(const VarPtr& v, const char* stage, int layer) {
  if (!v->val.all_finite()) {
    throw NumericError(std::string("generator ") + stage + " layer " +
                       std::to_string(layer) + " produced non-finite values");
  }
}

}  // namespace

GeneratorModel::GeneratorModel(const GeneratorConfig& config, Rng& init_rng)
    : config_(config) {
  if (config.class_count < 1) throw ValidationError("generator: class_count must be >= 1");
  if (config.latent_dim < 1) throw ValidationError("generator: latent_dim must be >= 1");
  if (config.channel_mult < 1) throw ValidationError("generator: channel_mult must be >= 1");
  const int cm = config.channel_mult;
  const int k = config.class_count;
  const int bottleneck_ch = 4 * cm;
  const int flat = bottleneck_ch * kBottleneck * kBottleneck;

  e1_ = Conv2d::create(params_, "enc.conv1", 3, cm, 3, 1, 1, init_rng);
  e2_ = Conv2d::create(params_, "enc.conv2", cm, 2 * cm, 3, 2, 1, init_rng);
  e3_ = Conv2d::create(params_, "enc.conv3", 2 * cm, 4 * cm, 3, 2, 1, init_rng);
  e4_ = Conv2d::create(params_, "enc.conv4", 4 * cm, 4 * cm, 3, 2, 1, init_rng);
  int head_in = flat;
  if (config.encoder_conditioned) {
    enc_embed_ = Embedding::create(params_, "enc.label_embed", k, config.label_embed_dim,
                                   init_rng);
    head_in += config.label_embed_dim;
  }
  fc_mu_ = Linear::create(params_, "enc.fc_mu", head_in, config.latent_dim, init_rng);
  fc_log_var_ = Linear::create(params_, "enc.fc_log_var", head_in, config.latent_dim,
                               init_rng);

  fc_z_ = Linear::create(params_, "dec.fc_z", config.latent_dim, flat, init_rng);
  auto make_block = [&](const std::string& name, int cin, int cout) {
    ResBlockUp blk;
    blk.n1 = CondNorm::create(params_, name + ".n1", k, cin, init_rng);
    blk.c1 = Conv2d::create(params_, name + ".c1", cin, cout, 3, 1, 1, init_rng);
    blk.n2 = CondNorm::create(params_, name + ".n2", k, cout, init_rng);
    blk.c2 = Conv2d::create(params_, name + ".c2", cout, cout, 3, 1, 1, init_rng);
    blk.skip = Conv2d::create(params_, name + ".skip", cin, cout, 1, 1, 0, init_rng);
    return blk;
  };
  b1_ = make_block("dec.block1", 4 * cm, 4 * cm);  // 4 -> 8
  b2_ = make_block("dec.block2", 4 * cm, 2 * cm);  // 8 -> 16
  b3_ = make_block("dec.block3", 2 * cm, cm);      // 16 -> 32
  out_norm_ = CondNorm::create(params_, "dec.out_norm", k, cm, init_rng);
  out_conv_ = Conv2d::create(params_, "dec.out_conv", cm, 3, 3, 1, 1, init_rng);
}

VarPtr GeneratorModel::ResBlockUp::forward(VarPtr x, const std::vector<int>& labels) const {
  VarPtr h = leaky_relu(n1(x, labels), kLeakySlope);
  h = upsample2x(h);
  h = c1(h);
  h = leaky_relu(n2(h, labels), kLeakySlope);
  h = c2(h);
  VarPtr s = skip(upsample2x(x));
  return add(h, s);
}

GeneratorModel::EncodeNodes GeneratorModel::encode_graph(VarPtr x,
                                                         const std::vector<int>& labels,
                                                         bool deterministic, Rng* rng,
                                                         const Tensor* eps_override) const {
  if (x->val.ndim() != 4 || x->val.dim(1) != 3 || x->val.dim(2) != kImageSize ||
      x->val.dim(3) != kImageSize) {
    throw ValidationError("encode: expected [N,3,32,32] input");
  }
  const int n = x->val.dim(0);
  if (config_.encoder_conditioned) check_labels(labels, config_.class_count, "encode");

  VarPtr h = leaky_relu(e1_(x), kLeakySlope);
  check_finite(h, "encoder", 1);
  h = leaky_relu(e2_(h), kLeakySlope);
  check_finite(h, "encoder", 2);
  h = leaky_relu(e3_(h), kLeakySlope);
  check_finite(h, "encoder", 3);
  h = leaky_relu(e4_(h), kLeakySlope);
  check_finite(h, "encoder", 4);
  h = reshape(h, {n, static_cast<int>(h->val.size() / n)});
  if (config_.encoder_conditioned) {
    // Joins along the feature axis via a [N,D,1,1] detour through the
    // channel-concat op.
    VarPtr emb = enc_embed_(labels);
    VarPtr h4 = reshape(h, {n, h->val.dim(1), 1, 1});
    VarPtr e4d = reshape(emb, {n, config_.label_embed_dim, 1, 1});
    VarPtr joined = concat_channels(h4, e4d);
    h = reshape(joined, {n, joined->val.dim(1)});
  }

  EncodeNodes out;
  out.mu = fc_mu_(h);
  out.log_var = fc_log_var_(h);
  check_finite(out.mu, "encoder", 5);
  check_finite(out.log_var, "encoder", 5);

  out.eps = Tensor({n, config_.latent_dim}, 0.0);
  if (deterministic) {
    out.z = out.mu;
  } else {
    if (eps_override) {
      if (!eps_override->same_shape(out.eps)) {
        throw ValidationError("encode: eps override has wrong shape");
      }
      out.eps = *eps_override;
    } else {
      if (!rng) throw ValidationError("encode: sampling mode needs an rng");
      for (std::int64_t i = 0; i < out.eps.size(); ++i) out.eps[i] = rng->normal();
    }
    // Reparameterization: z = mu + exp(0.5 * log_var) * eps.
    out.z = add(out.mu, mul(exp_elem(mul_scalar(out.log_var, 0.5)), constant(out.eps)));
  }
  return out;
}

VarPtr GeneratorModel::decode_graph(VarPtr z, const std::vector<int>& labels) const {
  if (z->val.ndim() != 2 || z->val.dim(1) != config_.latent_dim) {
    throw ValidationError("decode: expected [N," + std::to_string(config_.latent_dim) +
                          "] latent");
  }
  if (!z->val.all_finite()) throw ValidationError("decode: non-finite latent");
  const int n = z->val.dim(0);
  if (static_cast<int>(labels.size()) != n) {
    throw ValidationError("decode: label count does not match batch");
  }
  check_labels(labels, config_.class_count, "decode");
  const int cm = config_.channel_mult;

  VarPtr h = fc_z_(z);
  h = reshape(h, {n, 4 * cm, kBottleneck, kBottleneck});
  h = b1_.forward(h, labels);
  check_finite(h, "decoder", 1);
  h = b2_.forward(h, labels);
  check_finite(h, "decoder", 2);
  h = b3_.forward(h, labels);
  check_finite(h, "decoder", 3);
  h = leaky_relu(out_norm_(h, labels), kLeakySlope);
  return sigmoid(out_conv_(h));
}

LatentCode GeneratorModel::encode(const Tensor& batch, const std::vector<int>& labels,
                                  bool deterministic, Rng* rng) const {
  EncodeNodes nodes = encode_graph(constant(batch), labels, deterministic, rng);
  LatentCode code;
  code.mu = nodes.mu->val;
  code.log_var = nodes.log_var->val;
  code.z = nodes.z->val;
  code.eps = nodes.eps;
  return code;
}

Tensor GeneratorModel::decode(const Tensor& z, const std::vector<int>& labels) const {
  return decode_graph(constant(z), labels)->val;
}

SynthesisPair GeneratorModel::synthesize(const Tensor& x, int label,
                                         const MaskSpec& mask_spec, Rng& rng,
                                         bool deterministic) const {
  if (x.ndim() != 3) throw ValidationError("synthesize: expected [C,H,W] image");
  SynthesisPair pair;
  pair.x = x;
  pair.label = label;
  pair.mask = generate_mask(mask_spec, x.dim(1), x.dim(2), rng);
  Tensor masked = apply_mask(x, pair.mask, mask_spec, rng);
  Tensor batch = masked.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  LatentCode code = encode(batch, {label}, deterministic, &rng);
  Tensor decoded = decode(code.z, {label});
  pair.x_prime = decoded.reshaped({decoded.dim(1), decoded.dim(2), decoded.dim(3)});
  return pair;
}

}  // namespace synood
