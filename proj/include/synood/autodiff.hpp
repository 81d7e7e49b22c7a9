#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "synood/tensor.hpp"

namespace synood {

// Reverse-mode automatic differentiation on a dynamically built tape.
//
// Every op below returns a new Var node holding the forward value and a
// closure that routes gradients to its parents. Graphs are rebuilt from the
// leaf parameters on every training step; leaves persist across steps so
// their gradients can be consumed by the optimizer.
class Var;
using VarPtr = std::shared_ptr<Var>;

class Var {
 public:
  Tensor val;
  Tensor grad;  // allocated lazily; same shape as val once allocated
  bool requires_grad = false;
  std::vector<VarPtr> parents;
  std::function<void()> backprop;  // reads this->grad, accumulates into parents

  explicit Var(Tensor v, bool req = false) : val(std::move(v)), requires_grad(req) {}

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();  // allocate zero-filled grad on first touch
  void zero_grad();
  double scalar() const;  // value of a single-element Var
};

// Leaf constructors.
VarPtr leaf(Tensor v, bool requires_grad);
VarPtr constant(Tensor v);
VarPtr constant_scalar(double v);

// Runs backpropagation from a scalar root: seeds d(root)/d(root) = 1 and
// applies the chain rule in reverse topological order.
void backward(const VarPtr& root);

// ---- elementwise (operands must share a shape) ----
VarPtr add(VarPtr a, VarPtr b);
VarPtr sub(VarPtr a, VarPtr b);
VarPtr mul(VarPtr a, VarPtr b);
VarPtr divide(VarPtr a, VarPtr b);
VarPtr neg(VarPtr a);
VarPtr add_scalar(VarPtr a, double c);
VarPtr mul_scalar(VarPtr a, double c);
VarPtr relu(VarPtr a);
VarPtr leaky_relu(VarPtr a, double slope);
VarPtr sigmoid(VarPtr a);
VarPtr softplus(VarPtr a);  // stabilized: max(x,0) + log1p(exp(-|x|))
VarPtr exp_elem(VarPtr a);
VarPtr abs_elem(VarPtr a);
VarPtr square(VarPtr a);

// ---- reductions (all return a [1] scalar) ----
VarPtr sum_all(VarPtr a);
VarPtr mean_all(VarPtr a);
// Sum over every axis except the leading batch axis, then mean over batch.
VarPtr batch_mean_sum(VarPtr a);

// ---- linear algebra ----
VarPtr matmul(VarPtr a, VarPtr b);       // [M,K] x [K,N] -> [M,N]
VarPtr add_rowvec(VarPtr a, VarPtr b);   // [N,D] + [D] broadcast over rows
VarPtr rowwise_dot(VarPtr a, VarPtr b);  // [N,D],[N,D] -> [N,1]

// ---- shape ----
VarPtr reshape(VarPtr a, std::vector<int> shape);
VarPtr concat_channels(VarPtr a, VarPtr b);  // along axis 1 of [N,C,H,W]
VarPtr detach(VarPtr a);  // value copy that blocks gradient flow

// ---- convolution & pooling (inputs are [N,C,H,W]) ----
// w: [OC,C,KH,KW], optional bias [OC] (pass nullptr for none), zero padding.
VarPtr conv2d(VarPtr x, VarPtr w, VarPtr b, int stride, int pad);
VarPtr upsample2x(VarPtr x);  // nearest neighbour
VarPtr avgpool2x(VarPtr x);   // H, W must be even
VarPtr global_sum_pool(VarPtr x);  // -> [N,C]
VarPtr global_avg_pool(VarPtr x);  // -> [N,C]
// Depthwise valid cross-correlation with a fixed (non-learned) 2-D kernel.
VarPtr fixed_blur_valid(VarPtr x, const Tensor& kernel);

// ---- conditioning ----
// table: [K,D]; returns [N,D] with row n = table[labels[n]].
VarPtr embed(VarPtr table, const std::vector<int>& labels);
// Normalize each (sample, channel) plane over its spatial extent.
VarPtr channel_norm(VarPtr x, double eps = 1e-5);
// y[n,c,h,w] = x[n,c,h,w] * gamma[n,c] + beta[n,c]; gamma/beta are [N,C].
VarPtr scale_shift_nc(VarPtr x, VarPtr gamma, VarPtr beta);

// ---- classification ----
// Mean cross-entropy of softmax(logits[N,K]) against integer labels.
VarPtr softmax_xent(VarPtr logits, const std::vector<int>& labels);
// Row-wise softmax probabilities (forward-only convenience).
Tensor softmax_rows(const Tensor& logits);

}  // namespace synood
