#include "synood/losses.hpp"

#include <cmath>

#include "synood/error.hpp"

namespace synood {

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

void check_loss_inputs(const VarPtr& x, const VarPtr& y, const char* op) {
  if (!x || !y) throw ValidationError(std::string(op) + ": null operand");
  if (!x->val.same_shape(y->val)) {
    throw ValidationError(std::string(op) + ": image shapes differ");
  }
}

}  // namespace

VarPtr kld_loss(VarPtr mu, VarPtr log_var) {
  check_loss_inputs(mu, log_var, "kld_loss");
  if (mu->val.ndim() != 2) throw ValidationError("kld_loss: expected [N,D] codes");
  // 0.5 * (mu^2 + exp(log_var) - 1 - log_var), per dimension.
  VarPtr per_dim = sub(add(square(mu), exp_elem(log_var)), add_scalar(log_var, 1.0));
  return mul_scalar(batch_mean_sum(per_dim), 0.5);
}

VarPtr disc_loss(const UNetDiscOutput& real, const UNetDiscOutput& fake) {
  // -log sigmoid(t) = softplus(-t); -log(1 - sigmoid(t)) = softplus(t).
  VarPtr l_enc =
      add(mean_all(softplus(neg(real.enc_logit))), mean_all(softplus(fake.enc_logit)));
  VarPtr l_dec = add(batch_mean_sum(softplus(neg(real.dec_logits))),
                     batch_mean_sum(softplus(fake.dec_logits)));
  return add(l_enc, l_dec);
}

GenLossParts gen_loss(const UNetDiscOutput& fake, VarPtr x, VarPtr x_prime,
                      double recon_weight) {
  check_loss_inputs(x, x_prime, "gen_loss");
  GenLossParts parts;
  parts.adv = add(mean_all(softplus(neg(fake.enc_logit))),
                  batch_mean_sum(softplus(neg(fake.dec_logits))));
  parts.l1 = l1_loss(x, x_prime);
  parts.l2 = l2_loss(x, x_prime);
  parts.ssim = ssim(x, x_prime);
  VarPtr recon =
      add(add(parts.l1, parts.l2), sub(constant_scalar(1.0), parts.ssim));
  parts.total = add(parts.adv, mul_scalar(recon, recon_weight));
  return parts;
}

VarPtr hinge_loss(VarPtr pos_scores, VarPtr neg_scores) {
  if (pos_scores->val.ndim() != 2 || pos_scores->val.dim(1) != 1 ||
      neg_scores->val.ndim() != 2 || neg_scores->val.dim(1) != 1) {
    throw ValidationError("hinge_loss: expected [N,1] score columns");
  }
  VarPtr pos_term = mean_all(relu(add_scalar(neg(pos_scores), 1.0)));
  VarPtr neg_term = mean_all(relu(add_scalar(neg_scores, 1.0)));
  return add(pos_term, neg_term);
}

VarPtr l1_loss(VarPtr x, VarPtr y) {
  check_loss_inputs(x, y, "l1_loss");
  return mean_all(abs_elem(sub(std::move(x), std::move(y))));
}

VarPtr l2_loss(VarPtr x, VarPtr y) {
  check_loss_inputs(x, y, "l2_loss");
  return mean_all(square(sub(std::move(x), std::move(y))));
}

Tensor gaussian_kernel2d(int size, double sigma) {
  Tensor k({size, size});
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
      const double v = std::exp(-d2 / (2.0 * sigma * sigma));
      k[static_cast<std::int64_t>(i) * size + j] = v;
      sum += v;
    }
  }
  for (std::int64_t i = 0; i < k.size(); ++i) k[i] /= sum;
  return k;
}

VarPtr ssim(VarPtr x, VarPtr y) {
  check_loss_inputs(x, y, "ssim");
  if (x->val.ndim() != 4) throw ValidationError("ssim: expected [N,C,H,W] inputs");
  if (x->val.dim(2) < kSsimWindow || x->val.dim(3) < kSsimWindow) {
    throw ValidationError("ssim: image smaller than the 11x11 window");
  }
  static const Tensor kernel = gaussian_kernel2d(kSsimWindow, kSsimSigma);

  // Local Gaussian statistics; variances/covariance via blur(a*b) - mu_a*mu_b.
  VarPtr mu_x = fixed_blur_valid(x, kernel);
  VarPtr mu_y = fixed_blur_valid(y, kernel);
  VarPtr xx = fixed_blur_valid(mul(x, x), kernel);
  VarPtr yy = fixed_blur_valid(mul(y, y), kernel);
  VarPtr xy = fixed_blur_valid(mul(x, y), kernel);
  VarPtr mu_xx = mul(mu_x, mu_x);
  VarPtr mu_yy = mul(mu_y, mu_y);
  VarPtr mu_xy = mul(mu_x, mu_y);
  VarPtr var_x = sub(xx, mu_xx);
  VarPtr var_y = sub(yy, mu_yy);
  VarPtr cov_xy = sub(xy, mu_xy);

  VarPtr num = mul(add_scalar(mul_scalar(mu_xy, 2.0), kSsimC1),
                   add_scalar(mul_scalar(cov_xy, 2.0), kSsimC2));
  VarPtr den = mul(add_scalar(add(mu_xx, mu_yy), kSsimC1),
                   add_scalar(add(var_x, var_y), kSsimC2));
  return mean_all(divide(num, den));
}

double ssim_value(const Tensor& x, const Tensor& y) {
  Tensor a = x, b = y;
  if (a.ndim() == 3) {
    a = a.reshaped({1, a.dim(0), a.dim(1), a.dim(2)});
    b = b.reshaped({1, b.dim(0), b.dim(1), b.dim(2)});
  }
  return ssim(constant(std::move(a)), constant(std::move(b)))->scalar();
}

}  // namespace synood
