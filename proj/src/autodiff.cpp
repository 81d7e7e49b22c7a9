#include "synood/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <unordered_set>

#include "synood/error.hpp"

namespace synood {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

void Var::ensure_grad() {
  if (grad.empty()) grad = Tensor(val.shape(), 0.0);
}

void Var::zero_grad() {
  if (!grad.empty()) grad.zero();
}

double Var::scalar() const {
  if (val.size() != 1) throw ValidationError("Var::scalar called on non-scalar");
  return val[0];
}

VarPtr leaf(Tensor v, bool requires_grad) {
  return std::make_shared<Var>(std::move(v), requires_grad);
}

VarPtr constant(Tensor v) { return leaf(std::move(v), false); }

VarPtr constant_scalar(double v) { return constant(Tensor({1}, v)); }

namespace {

VarPtr make_node(Tensor val, std::vector<VarPtr> parents) {
  auto node = std::make_shared<Var>(std::move(val));
  node->parents = std::move(parents);
  for (const auto& p : node->parents) {
    if (p->requires_grad) {
      node->requires_grad = true;
      break;
    }
  }
  return node;
}

void check_same_shape(const VarPtr& a, const VarPtr& b, const char* op) {
  if (!a->val.same_shape(b->val)) {
    throw ValidationError(std::string(op) + ": operand shapes differ");
  }
}

void check_4d(const VarPtr& x, const char* op) {
  if (x->val.ndim() != 4) {
    throw ValidationError(std::string(op) + ": expected a 4-D [N,C,H,W] input");
  }
}

// Generic elementwise unary op: f computes the output, dfdx the local
// derivative as a function of (input value, output value).
VarPtr unary_op(VarPtr a, double (*f)(double), double (*dfdx)(double, double)) {
  Tensor out(a->val.shape());
  const std::int64_t n = a->val.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = f(a->val[i]);
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa, dfdx, n]() {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        pa->grad[i] += self->grad[i] * dfdx(pa->val[i], self->val[i]);
      }
    };
  }
  return node;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void backward(const VarPtr& root) {
  if (root->val.size() != 1) {
    throw ValidationError("backward: root must be a scalar");
  }
  // Post-order DFS over parents gives a topological order of the subgraph.
  std::vector<Var*> order;
  std::unordered_set<Var*> seen;
  std::vector<std::pair<Var*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Var* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad.fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Var* node = *it;
    if (node->requires_grad && node->backprop && node->has_grad()) node->backprop();
  }
}

// ---------------------------------------------------------------- elementwise

VarPtr add(VarPtr a, VarPtr b) {
  check_same_shape(a, b, "add");
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] + b->val[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pb->grad[i] += self->grad[i];
      }
    };
  }
  return node;
}

VarPtr sub(VarPtr a, VarPtr b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] - b->val[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pb->grad[i] -= self->grad[i];
      }
    };
  }
  return node;
}

VarPtr mul(VarPtr a, VarPtr b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] * b->val[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i] * pb->val[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pb->grad[i] += self->grad[i] * pa->val[i];
      }
    };
  }
  return node;
}

VarPtr divide(VarPtr a, VarPtr b) {
  check_same_shape(a, b, "divide");
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] / b->val[i];
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i] / pb->val[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
          pb->grad[i] -= self->grad[i] * self->val[i] / pb->val[i];
        }
      }
    };
  }
  return node;
}

VarPtr neg(VarPtr a) { return mul_scalar(std::move(a), -1.0); }

VarPtr add_scalar(VarPtr a, double c) {
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] + c;
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa, n]() {
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
    };
  }
  return node;
}

VarPtr mul_scalar(VarPtr a, double c) {
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) out[i] = a->val[i] * c;
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa, c, n]() {
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i] * c;
    };
  }
  return node;
}

VarPtr relu(VarPtr a) {
  return unary_op(
      std::move(a), [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

VarPtr leaky_relu(VarPtr a, double slope) {
  Tensor out(a->val.shape());
  const std::int64_t n = out.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = a->val[i];
    out[i] = x > 0.0 ? x : slope * x;
  }
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa, slope, n]() {
      pa->ensure_grad();
      for (std::int64_t i = 0; i < n; ++i) {
        pa->grad[i] += self->grad[i] * (pa->val[i] > 0.0 ? 1.0 : slope);
      }
    };
  }
  return node;
}

VarPtr sigmoid(VarPtr a) {
  return unary_op(std::move(a), &stable_sigmoid,
                  [](double, double y) { return y * (1.0 - y); });
}

VarPtr softplus(VarPtr a) {
  return unary_op(
      std::move(a),
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(x); });
}

VarPtr exp_elem(VarPtr a) {
  return unary_op(std::move(a), [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

VarPtr abs_elem(VarPtr a) {
  return unary_op(std::move(a), [](double x) { return std::abs(x); },
                  [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

VarPtr square(VarPtr a) {
  return unary_op(std::move(a), [](double x) { return x * x; },
                  [](double x, double) { return 2.0 * x; });
}

// ----------------------------------------------------------------- reductions

VarPtr sum_all(VarPtr a) {
  Tensor out({1}, a->val.sum());
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa]() {
      pa->ensure_grad();
      const double g = self->grad[0];
      const std::int64_t n = pa->val.size();
      for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += g;
    };
  }
  return node;
}

VarPtr mean_all(VarPtr a) {
  if (a->val.size() == 0) throw ValidationError("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(a->val.size());
  return mul_scalar(sum_all(std::move(a)), inv);
}

VarPtr batch_mean_sum(VarPtr a) {
  if (a->val.ndim() < 1 || a->val.dim(0) == 0) {
    throw ValidationError("batch_mean_sum: need a nonempty batch axis");
  }
  const double inv = 1.0 / static_cast<double>(a->val.dim(0));
  return mul_scalar(sum_all(std::move(a)), inv);
}

// ------------------------------------------------------------- linear algebra

namespace {

// Eigen's packed GEMM kernels accumulate in an order that does not depend on
// where the operands live, but the GEMV paths it dispatches to whenever a
// product has a unit dimension reduce directly over the mapped memory,
// peeling scalar iterations until the first SIMD-aligned address. Two runs of
// the same program can then round the same product differently because a heap
// buffer landed on a different 32-byte phase. Determinism matters more than
// the last ulp here, so unit-dimension products take these fixed-order loops.
inline bool gemv_shaped(int m, int k, int n) { return m == 1 || k == 1 || n == 1; }

// c ?= a [m,k] * b [k,n]
void plain_gemm(const double* a, const double* b, double* c, int m, int k, int n,
                bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      double& out = c[i * n + j];
      out = accumulate ? out + acc : acc;
    }
  }
}

// da += g [m,n] * b^T, where b is [k,n]
void plain_gemm_abt(const double* g, const double* b, double* da, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int t = 0; t < k; ++t) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += g[i * n + j] * b[t * n + j];
      da[i * k + t] += acc;
    }
  }
}

// db += a^T * g, where a is [m,k] and g is [m,n]
void plain_gemm_atb(const double* a, const double* g, double* db, int m, int k, int n) {
  for (int t = 0; t < k; ++t) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) acc += a[i * k + t] * g[i * n + j];
      db[t * n + j] += acc;
    }
  }
}

}  // namespace

VarPtr matmul(VarPtr a, VarPtr b) {
  if (a->val.ndim() != 2 || b->val.ndim() != 2 || a->val.dim(1) != b->val.dim(0)) {
    throw ValidationError("matmul: incompatible shapes");
  }
  const int m = a->val.dim(0), k = a->val.dim(1), n = b->val.dim(1);
  Tensor out({m, n});
  if (gemv_shaped(m, k, n)) {
    plain_gemm(a->val.data(), b->val.data(), out.data(), m, k, n, /*accumulate=*/false);
  } else {
    CMapRM A(a->val.data(), m, k), B(b->val.data(), k, n);
    MapRM C(out.data(), m, n);
    C.noalias() = A * B;
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, m, k, n]() {
      const bool plain = gemv_shaped(m, k, n);
      if (pa->requires_grad) {
        pa->ensure_grad();
        if (plain) {
          plain_gemm_abt(self->grad.data(), pb->val.data(), pa->grad.data(), m, k, n);
        } else {
          CMapRM G(self->grad.data(), m, n);
          CMapRM B(pb->val.data(), k, n);
          MapRM dA(pa->grad.data(), m, k);
          dA.noalias() += G * B.transpose();
        }
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        if (plain) {
          plain_gemm_atb(pa->val.data(), self->grad.data(), pb->grad.data(), m, k, n);
        } else {
          CMapRM G(self->grad.data(), m, n);
          CMapRM A(pa->val.data(), m, k);
          MapRM dB(pb->grad.data(), k, n);
          dB.noalias() += A.transpose() * G;
        }
      }
    };
  }
  return node;
}

VarPtr add_rowvec(VarPtr a, VarPtr b) {
  if (a->val.ndim() != 2 || b->val.ndim() != 1 || a->val.dim(1) != b->val.dim(0)) {
    throw ValidationError("add_rowvec: expected [N,D] + [D]");
  }
  const int rows = a->val.dim(0), cols = a->val.dim(1);
  Tensor out({rows, cols});
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) out[r * cols + c] = a->val[r * cols + c] + b->val[c];
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, rows, cols]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        const std::int64_t n = static_cast<std::int64_t>(rows) * cols;
        for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) pb->grad[c] += self->grad[r * cols + c];
        }
      }
    };
  }
  return node;
}

VarPtr rowwise_dot(VarPtr a, VarPtr b) {
  check_same_shape(a, b, "rowwise_dot");
  if (a->val.ndim() != 2) throw ValidationError("rowwise_dot: expected [N,D] inputs");
  const int rows = a->val.dim(0), cols = a->val.dim(1);
  Tensor out({rows, 1});
  for (int r = 0; r < rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += a->val[r * cols + c] * b->val[r * cols + c];
    out[r] = s;
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, rows, cols]() {
      for (int r = 0; r < rows; ++r) {
        const double g = self->grad[r];
        if (pa->requires_grad) {
          pa->ensure_grad();
          for (int c = 0; c < cols; ++c) pa->grad[r * cols + c] += g * pb->val[r * cols + c];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int c = 0; c < cols; ++c) pb->grad[r * cols + c] += g * pa->val[r * cols + c];
        }
      }
    };
  }
  return node;
}

// ------------------------------------------------------------------ shape ops

VarPtr reshape(VarPtr a, std::vector<int> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  auto node = make_node(std::move(out), {a});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    node->backprop = [self, pa]() {
      pa->ensure_grad();
      const std::int64_t n = pa->val.size();
      for (std::int64_t i = 0; i < n; ++i) pa->grad[i] += self->grad[i];
    };
  }
  return node;
}

VarPtr concat_channels(VarPtr a, VarPtr b) {
  check_4d(a, "concat_channels");
  check_4d(b, "concat_channels");
  const int n = a->val.dim(0), ca = a->val.dim(1), cb = b->val.dim(1);
  const int h = a->val.dim(2), w = a->val.dim(3);
  if (b->val.dim(0) != n || b->val.dim(2) != h || b->val.dim(3) != w) {
    throw ValidationError("concat_channels: batch/spatial shapes differ");
  }
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  Tensor out({n, ca + cb, h, w});
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + (static_cast<std::int64_t>(i) * (ca + cb)) * plane,
                a->val.data() + static_cast<std::int64_t>(i) * ca * plane,
                static_cast<std::size_t>(ca * plane) * sizeof(double));
    std::memcpy(out.data() + (static_cast<std::int64_t>(i) * (ca + cb) + ca) * plane,
                b->val.data() + static_cast<std::int64_t>(i) * cb * plane,
                static_cast<std::size_t>(cb * plane) * sizeof(double));
  }
  auto node = make_node(std::move(out), {a, b});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pa = a.get();
    Var* pb = b.get();
    node->backprop = [self, pa, pb, n, ca, cb, plane]() {
      for (int i = 0; i < n; ++i) {
        const double* g = self->grad.data() + static_cast<std::int64_t>(i) * (ca + cb) * plane;
        if (pa->requires_grad) {
          pa->ensure_grad();
          double* da = pa->grad.data() + static_cast<std::int64_t>(i) * ca * plane;
          for (std::int64_t j = 0; j < ca * plane; ++j) da[j] += g[j];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          double* db = pb->grad.data() + static_cast<std::int64_t>(i) * cb * plane;
          for (std::int64_t j = 0; j < cb * plane; ++j) db[j] += g[ca * plane + j];
        }
      }
    };
  }
  return node;
}

VarPtr detach(VarPtr a) { return constant(a->val); }

// ---------------------------------------------------------------- convolution

namespace {

// Gathers the im2col matrix [C*KH*KW, OH*OW] for one sample with zero padding.
void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride,
            int pad, int oh, int ow, double* col) {
  std::int64_t row = 0;
  for (int ch = 0; ch < c; ++ch) {
    const double* plane = x + static_cast<std::int64_t>(ch) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++row) {
        double* dst = col + row * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            dst[oi * ow + oj] =
                (ii >= 0 && ii < h && jj >= 0 && jj < w) ? plane[ii * w + jj] : 0.0;
          }
        }
      }
    }
  }
}

// Scatters a column-matrix gradient back onto the padded input layout.
void col2im_accum(const double* col, int c, int h, int w, int kh, int kw,
                  int stride, int pad, int oh, int ow, double* dx) {
  std::int64_t row = 0;
  for (int ch = 0; ch < c; ++ch) {
    double* plane = dx + static_cast<std::int64_t>(ch) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj, ++row) {
        const double* src = col + row * oh * ow;
        for (int oi = 0; oi < oh; ++oi) {
          const int ii = oi * stride - pad + ki;
          if (ii < 0 || ii >= h) continue;
          for (int oj = 0; oj < ow; ++oj) {
            const int jj = oj * stride - pad + kj;
            if (jj >= 0 && jj < w) plane[ii * w + jj] += src[oi * ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

VarPtr conv2d(VarPtr x, VarPtr w, VarPtr b, int stride, int pad) {
  check_4d(x, "conv2d");
  if (w->val.ndim() != 4) throw ValidationError("conv2d: weight must be [OC,C,KH,KW]");
  const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), wd = x->val.dim(3);
  const int oc = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  if (w->val.dim(1) != c) throw ValidationError("conv2d: channel mismatch");
  if (stride < 1 || pad < 0) throw ValidationError("conv2d: bad stride/pad");
  const int oh = (h + 2 * pad - kh) / stride + 1;
  const int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ValidationError("conv2d: kernel larger than padded input");
  if (b && (b->val.ndim() != 1 || b->val.dim(0) != oc)) {
    throw ValidationError("conv2d: bias must be [OC]");
  }

  const int krows = c * kh * kw;
  const std::int64_t omap = static_cast<std::int64_t>(oh) * ow;
  const bool plain = gemv_shaped(oc, krows, static_cast<int>(omap));
  Tensor out({n, oc, oh, ow});
  std::vector<double> col(static_cast<std::size_t>(krows) * omap);
  CMapRM W(w->val.data(), oc, krows);
  for (int i = 0; i < n; ++i) {
    im2col(x->val.data() + static_cast<std::int64_t>(i) * c * h * wd, c, h, wd, kh, kw,
           stride, pad, oh, ow, col.data());
    double* yp = out.data() + static_cast<std::int64_t>(i) * oc * omap;
    if (plain) {
      plain_gemm(w->val.data(), col.data(), yp, oc, krows, static_cast<int>(omap),
                 /*accumulate=*/false);
    } else {
      CMapRM Col(col.data(), krows, omap);
      MapRM Y(yp, oc, omap);
      Y.noalias() = W * Col;
    }
    if (b) {
      for (int o = 0; o < oc; ++o) {
        double* row = yp + static_cast<std::int64_t>(o) * omap;
        for (std::int64_t t = 0; t < omap; ++t) row[t] += b->val[o];
      }
    }
  }

  std::vector<VarPtr> parents = b ? std::vector<VarPtr>{x, w, b} : std::vector<VarPtr>{x, w};
  auto node = make_node(std::move(out), std::move(parents));
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    Var* pw = w.get();
    Var* pb = b ? b.get() : nullptr;
    node->backprop = [self, px, pw, pb, n, c, h, wd, oc, kh, kw, stride, pad, oh, ow,
                      krows, omap]() {
      // The im2col buffer is recomputed here rather than cached at forward
      // time: it is the largest allocation in the graph and only two GEMMs
      // depend on it.
      std::vector<double> col(static_cast<std::size_t>(krows) * omap);
      std::vector<double> dcol;
      if (px->requires_grad) {
        px->ensure_grad();
        dcol.resize(col.size());
      }
      if (pw->requires_grad) pw->ensure_grad();
      if (pb && pb->requires_grad) pb->ensure_grad();
      const bool plain = gemv_shaped(oc, krows, static_cast<int>(omap));
      CMapRM W(pw->val.data(), oc, krows);
      for (int i = 0; i < n; ++i) {
        const double* gp = self->grad.data() + static_cast<std::int64_t>(i) * oc * omap;
        if (pw->requires_grad || px->requires_grad) {
          im2col(px->val.data() + static_cast<std::int64_t>(i) * c * h * wd, c, h, wd,
                 kh, kw, stride, pad, oh, ow, col.data());
        }
        if (pw->requires_grad) {
          if (plain) {
            plain_gemm_abt(gp, col.data(), pw->grad.data(), oc, krows,
                           static_cast<int>(omap));
          } else {
            CMapRM G(gp, oc, omap);
            CMapRM Col(col.data(), krows, omap);
            MapRM dW(pw->grad.data(), oc, krows);
            dW.noalias() += G * Col.transpose();
          }
        }
        if (px->requires_grad) {
          if (plain) {
            std::fill(dcol.begin(), dcol.end(), 0.0);
            plain_gemm_atb(pw->val.data(), gp, dcol.data(), oc, krows,
                           static_cast<int>(omap));
          } else {
            CMapRM G(gp, oc, omap);
            MapRM dCol(dcol.data(), krows, omap);
            dCol.noalias() = W.transpose() * G;
          }
          col2im_accum(dcol.data(), c, h, wd, kh, kw, stride, pad, oh, ow,
                       px->grad.data() + static_cast<std::int64_t>(i) * c * h * wd);
        }
        if (pb && pb->requires_grad) {
          for (int o = 0; o < oc; ++o) {
            const double* row = gp + static_cast<std::int64_t>(o) * omap;
            double acc = 0.0;
            for (std::int64_t t = 0; t < omap; ++t) acc += row[t];
            pb->grad[o] += acc;
          }
        }
      }
    };
  }
  return node;
}

VarPtr upsample2x(VarPtr x) {
  check_4d(x, "upsample2x");
  const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->val.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst = out.data() + static_cast<std::int64_t>(i) * 4 * h * w;
    for (int r = 0; r < h; ++r) {
      for (int cc = 0; cc < w; ++cc) {
        const double v = src[r * w + cc];
        double* p = dst + (2 * r) * (2 * w) + 2 * cc;
        p[0] = v;
        p[1] = v;
        p[2 * w] = v;
        p[2 * w + 1] = v;
      }
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    node->backprop = [self, px, n, c, h, w]() {
      px->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double* g = self->grad.data() + static_cast<std::int64_t>(i) * 4 * h * w;
        double* dx = px->grad.data() + static_cast<std::int64_t>(i) * h * w;
        for (int r = 0; r < h; ++r) {
          for (int cc = 0; cc < w; ++cc) {
            const double* p = g + (2 * r) * (2 * w) + 2 * cc;
            dx[r * w + cc] += p[0] + p[1] + p[2 * w] + p[2 * w + 1];
          }
        }
      }
    };
  }
  return node;
}

VarPtr avgpool2x(VarPtr x) {
  check_4d(x, "avgpool2x");
  const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ValidationError("avgpool2x: odd spatial size");
  const int oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->val.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst = out.data() + static_cast<std::int64_t>(i) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int cc = 0; cc < ow; ++cc) {
        const double* p = src + (2 * r) * w + 2 * cc;
        dst[r * ow + cc] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    node->backprop = [self, px, n, c, h, w, oh, ow]() {
      px->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double* g = self->grad.data() + static_cast<std::int64_t>(i) * oh * ow;
        double* dx = px->grad.data() + static_cast<std::int64_t>(i) * h * w;
        for (int r = 0; r < oh; ++r) {
          for (int cc = 0; cc < ow; ++cc) {
            const double q = 0.25 * g[r * ow + cc];
            double* p = dx + (2 * r) * w + 2 * cc;
            p[0] += q;
            p[1] += q;
            p[w] += q;
            p[w + 1] += q;
          }
        }
      }
    };
  }
  return node;
}

VarPtr global_sum_pool(VarPtr x) {
  check_4d(x, "global_sum_pool");
  const int n = x->val.dim(0), c = x->val.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x->val.dim(2)) * x->val.dim(3);
  Tensor out({n, c});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->val.data() + i * plane;
    double s = 0.0;
    for (std::int64_t j = 0; j < plane; ++j) s += src[j];
    out[i] = s;
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    node->backprop = [self, px, n, c, plane]() {
      px->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double g = self->grad[i];
        double* dx = px->grad.data() + i * plane;
        for (std::int64_t j = 0; j < plane; ++j) dx[j] += g;
      }
    };
  }
  return node;
}

VarPtr global_avg_pool(VarPtr x) {
  check_4d(x, "global_avg_pool");
  const double inv = 1.0 / (static_cast<double>(x->val.dim(2)) * x->val.dim(3));
  const int n = x->val.dim(0), c = x->val.dim(1);
  return reshape(mul_scalar(global_sum_pool(std::move(x)), inv), {n, c});
}

VarPtr fixed_blur_valid(VarPtr x, const Tensor& kernel) {
  check_4d(x, "fixed_blur_valid");
  if (kernel.ndim() != 2) throw ValidationError("fixed_blur_valid: kernel must be 2-D");
  const int n = x->val.dim(0), c = x->val.dim(1), h = x->val.dim(2), w = x->val.dim(3);
  const int kh = kernel.dim(0), kw = kernel.dim(1);
  const int oh = h - kh + 1, ow = w - kw + 1;
  if (oh <= 0 || ow <= 0) throw ValidationError("fixed_blur_valid: kernel larger than input");
  Tensor out({n, c, oh, ow});
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->val.data() + static_cast<std::int64_t>(i) * h * w;
    double* dst = out.data() + static_cast<std::int64_t>(i) * oh * ow;
    for (int r = 0; r < oh; ++r) {
      for (int cc = 0; cc < ow; ++cc) {
        double s = 0.0;
        for (int ki = 0; ki < kh; ++ki) {
          const double* row = src + (r + ki) * w + cc;
          const double* krow = kernel.data() + ki * kw;
          for (int kj = 0; kj < kw; ++kj) s += krow[kj] * row[kj];
        }
        dst[r * ow + cc] = s;
      }
    }
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    Tensor k = kernel;  // owned copy; the caller's kernel may not outlive the graph
    node->backprop = [self, px, k = std::move(k), n, c, h, w, kh, kw, oh, ow]() {
      px->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double* g = self->grad.data() + static_cast<std::int64_t>(i) * oh * ow;
        double* dx = px->grad.data() + static_cast<std::int64_t>(i) * h * w;
        for (int r = 0; r < oh; ++r) {
          for (int cc = 0; cc < ow; ++cc) {
            const double gv = g[r * ow + cc];
            for (int ki = 0; ki < kh; ++ki) {
              double* row = dx + (r + ki) * w + cc;
              const double* krow = k.data() + ki * kw;
              for (int kj = 0; kj < kw; ++kj) row[kj] += gv * krow[kj];
            }
          }
        }
      }
    };
  }
  return node;
}

// --------------------------------------------------------------- conditioning

VarPtr embed(VarPtr table, const std::vector<int>& labels) {
  if (table->val.ndim() != 2) throw ValidationError("embed: table must be [K,D]");
  const int k = table->val.dim(0), d = table->val.dim(1);
  const int n = static_cast<int>(labels.size());
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= k) throw ValidationError("embed: label out of range");
  }
  Tensor out({n, d});
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::int64_t>(i) * d,
                table->val.data() + static_cast<std::int64_t>(labels[i]) * d,
                static_cast<std::size_t>(d) * sizeof(double));
  }
  auto node = make_node(std::move(out), {table});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pt = table.get();
    node->backprop = [self, pt, labels, n, d]() {
      pt->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const double* g = self->grad.data() + static_cast<std::int64_t>(i) * d;
        double* dst = pt->grad.data() + static_cast<std::int64_t>(labels[i]) * d;
        for (int j = 0; j < d; ++j) dst[j] += g[j];
      }
    };
  }
  return node;
}

VarPtr channel_norm(VarPtr x, double eps) {
  check_4d(x, "channel_norm");
  const int n = x->val.dim(0), c = x->val.dim(1);
  const std::int64_t m = static_cast<std::int64_t>(x->val.dim(2)) * x->val.dim(3);
  Tensor out(x->val.shape());
  // inv_std per (n,c) plane is kept for the backward pass.
  std::vector<double> inv_std(static_cast<std::size_t>(n) * c);
  for (int i = 0; i < n * c; ++i) {
    const double* src = x->val.data() + i * m;
    double mean = 0.0;
    for (std::int64_t j = 0; j < m; ++j) mean += src[j];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t j = 0; j < m; ++j) {
      const double d = src[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    double* dst = out.data() + i * m;
    for (std::int64_t j = 0; j < m; ++j) dst[j] = (src[j] - mean) * is;
  }
  auto node = make_node(std::move(out), {x});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    node->backprop = [self, px, inv_std = std::move(inv_std), n, c, m]() {
      px->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double* g = self->grad.data() + i * m;
        const double* y = self->val.data() + i * m;
        double* dx = px->grad.data() + i * m;
        double gm = 0.0, gym = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
          gm += g[j];
          gym += g[j] * y[j];
        }
        gm /= static_cast<double>(m);
        gym /= static_cast<double>(m);
        const double is = inv_std[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < m; ++j) {
          dx[j] += is * (g[j] - gm - y[j] * gym);
        }
      }
    };
  }
  return node;
}

VarPtr scale_shift_nc(VarPtr x, VarPtr gamma, VarPtr beta) {
  check_4d(x, "scale_shift_nc");
  const int n = x->val.dim(0), c = x->val.dim(1);
  const std::int64_t m = static_cast<std::int64_t>(x->val.dim(2)) * x->val.dim(3);
  auto check_nc = [&](const VarPtr& v, const char* name) {
    if (v->val.ndim() != 2 || v->val.dim(0) != n || v->val.dim(1) != c) {
      throw ValidationError(std::string("scale_shift_nc: ") + name + " must be [N,C]");
    }
  };
  check_nc(gamma, "gamma");
  check_nc(beta, "beta");
  Tensor out(x->val.shape());
  for (int i = 0; i < n * c; ++i) {
    const double g = gamma->val[i], b = beta->val[i];
    const double* src = x->val.data() + i * m;
    double* dst = out.data() + i * m;
    for (std::int64_t j = 0; j < m; ++j) dst[j] = src[j] * g + b;
  }
  auto node = make_node(std::move(out), {x, gamma, beta});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* px = x.get();
    Var* pg = gamma.get();
    Var* pbt = beta.get();
    node->backprop = [self, px, pg, pbt, n, c, m]() {
      if (px->requires_grad) px->ensure_grad();
      if (pg->requires_grad) pg->ensure_grad();
      if (pbt->requires_grad) pbt->ensure_grad();
      for (int i = 0; i < n * c; ++i) {
        const double* g = self->grad.data() + i * m;
        const double* src = px->val.data() + i * m;
        if (px->requires_grad) {
          const double ga = pg->val[i];
          double* dx = px->grad.data() + i * m;
          for (std::int64_t j = 0; j < m; ++j) dx[j] += g[j] * ga;
        }
        if (pg->requires_grad) {
          double s = 0.0;
          for (std::int64_t j = 0; j < m; ++j) s += g[j] * src[j];
          pg->grad[i] += s;
        }
        if (pbt->requires_grad) {
          double s = 0.0;
          for (std::int64_t j = 0; j < m; ++j) s += g[j];
          pbt->grad[i] += s;
        }
      }
    };
  }
  return node;
}

// -------------------------------------------------------------- classification

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw ValidationError("softmax_rows: expected [N,K]");
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor p(logits.shape());
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data() + static_cast<std::int64_t>(i) * k;
    double* out = p.data() + static_cast<std::int64_t>(i) * k;
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < k; ++j) {
      out[j] = std::exp(row[j] - mx);
      z += out[j];
    }
    for (int j = 0; j < k; ++j) out[j] /= z;
  }
  return p;
}

VarPtr softmax_xent(VarPtr logits, const std::vector<int>& labels) {
  if (logits->val.ndim() != 2) throw ValidationError("softmax_xent: expected [N,K]");
  const int n = logits->val.dim(0), k = logits->val.dim(1);
  if (static_cast<int>(labels.size()) != n) {
    throw ValidationError("softmax_xent: label count mismatch");
  }
  for (int lbl : labels) {
    if (lbl < 0 || lbl >= k) throw ValidationError("softmax_xent: label out of range");
  }
  Tensor probs = softmax_rows(logits->val);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    loss -= std::log(std::max(probs[static_cast<std::int64_t>(i) * k + labels[i]], 1e-300));
  }
  loss /= static_cast<double>(n);
  auto node = make_node(Tensor({1}, loss), {logits});
  if (node->requires_grad) {
    Var* self = node.get();
    Var* pl = logits.get();
    node->backprop = [self, pl, probs = std::move(probs), labels, n, k]() {
      pl->ensure_grad();
      const double g = self->grad[0] / static_cast<double>(n);
      for (int i = 0; i < n; ++i) {
        const double* p = probs.data() + static_cast<std::int64_t>(i) * k;
        double* dl = pl->grad.data() + static_cast<std::int64_t>(i) * k;
        for (int j = 0; j < k; ++j) {
          dl[j] += g * (p[j] - (j == labels[i] ? 1.0 : 0.0));
        }
      }
    };
  }
  return node;
}

}  // namespace synood
