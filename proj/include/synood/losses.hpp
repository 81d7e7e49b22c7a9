#pragma once

#include "synood/autodiff.hpp"
#include "synood/tensor.hpp"

namespace synood {

// Scalar + per-pixel judgments of the U-Net discriminator, batched.
struct UNetDiscOutput {
  VarPtr enc_logit;   // [N,1]
  VarPtr dec_logits;  // [N,1,H,W]
};

// KL(N(mu, diag(exp(log_var))) || N(0, I)): 0.5 * (mu^2 + sigma^2 - 1 -
// log sigma^2) summed over dimensions, averaged over the batch.
VarPtr kld_loss(VarPtr mu, VarPtr log_var);

// Nonsaturating discriminator loss, numerically stabilized through softplus:
// encoder-head term is averaged over the batch; the per-pixel decoder-head
// term is summed over the map and averaged over the batch.
VarPtr disc_loss(const UNetDiscOutput& real, const UNetDiscOutput& fake);

// Generator loss = adversarial fooling terms + l1 + l2 + (1 - SSIM), all with
// unit weights (configurable at the call site through the parts).
struct GenLossParts {
  VarPtr total;
  VarPtr adv;
  VarPtr l1;
  VarPtr l2;
  VarPtr ssim;  // the raw similarity, not the (1 - SSIM) penalty
};
GenLossParts gen_loss(const UNetDiscOutput& fake, VarPtr x, VarPtr x_prime,
                      double recon_weight = 1.0);

// Margin objective for the conditional binary classifier:
// mean ReLU(1 - pos) + mean ReLU(1 + neg); scores are [N,1].
VarPtr hinge_loss(VarPtr pos_scores, VarPtr neg_scores);

VarPtr l1_loss(VarPtr x, VarPtr y);  // mean absolute pixel error
VarPtr l2_loss(VarPtr x, VarPtr y);  // mean squared pixel error

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2,
// C2=(0.03)^2 on unit dynamic range, valid windows only, averaged over
// channels and windows. Differentiable in both arguments.
VarPtr ssim(VarPtr x, VarPtr y);
// Forward-only convenience for [C,H,W] or [N,C,H,W] tensors.
double ssim_value(const Tensor& x, const Tensor& y);

// Normalized 2-D Gaussian kernel (exposed for tests).
Tensor gaussian_kernel2d(int size, double sigma);

}  // namespace synood
