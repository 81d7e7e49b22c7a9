#include "synood/nn.hpp"

#include <cmath>

#include "synood/error.hpp"

namespace synood {

VarPtr ParamStore::create(const std::string& name, Tensor init) {
  if (find(name)) throw ValidationError("ParamStore: duplicate parameter name " + name);
  auto v = leaf(std::move(init), true);
  items_.emplace_back(name, v);
  return v;
}

std::vector<VarPtr> ParamStore::vars() const {
  std::vector<VarPtr> out;
  out.reserve(items_.size());
  for (const auto& [name, v] : items_) out.push_back(v);
  return out;
}

VarPtr ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : items_) {
    if (n == name) return v;
  }
  return nullptr;
}

std::int64_t ParamStore::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : items_) n += v->val.size();
  return n;
}

void ParamStore::zero_grad() {
  for (const auto& [name, v] : items_) v->zero_grad();
}

double ParamStore::value_checksum() const {
  // A simple order-sensitive hash-like fold; exact equality is all we need.
  double acc = 0.0;
  double scale = 1.0;
  for (const auto& [name, v] : items_) {
    const std::int64_t n = v->val.size();
    for (std::int64_t i = 0; i < n; ++i) {
      scale = scale * 1.000000317 + 0.25;
      if (scale > 1e6) scale -= 1e6;
      acc += v->val[i] * scale;
    }
  }
  return acc;
}

Tensor conv_weight_init(int oc, int ic, int kh, int kw, Rng& rng) {
  Tensor w({oc, ic, kh, kw});
  const double stddev = std::sqrt(2.0 / (static_cast<double>(ic) * kh * kw));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

Tensor linear_weight_init(int in_dim, int out_dim, Rng& rng) {
  Tensor w({in_dim, out_dim});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, stddev);
  return w;
}

Conv2d Conv2d::create(ParamStore& ps, const std::string& name, int ic, int oc, int k,
                      int stride, int pad, Rng& rng) {
  Conv2d layer;
  layer.w = ps.create(name + ".w", conv_weight_init(oc, ic, k, k, rng));
  layer.b = ps.create(name + ".b", Tensor({oc}, 0.0));
  layer.stride = stride;
  layer.pad = pad;
  return layer;
}

Linear Linear::create(ParamStore& ps, const std::string& name, int in_dim, int out_dim,
                      Rng& rng) {
  Linear layer;
  layer.w = ps.create(name + ".w", linear_weight_init(in_dim, out_dim, rng));
  layer.b = ps.create(name + ".b", Tensor({out_dim}, 0.0));
  return layer;
}

Embedding Embedding::create(ParamStore& ps, const std::string& name, int k, int d, Rng& rng,
                            double mean, double stddev) {
  Tensor t({k, d});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(mean, stddev);
  Embedding e;
  e.table = ps.create(name, std::move(t));
  return e;
}

CondNorm CondNorm::create(ParamStore& ps, const std::string& name, int k, int c, Rng& rng) {
  CondNorm n;
  // Near-identity start; a small spread keeps the classes distinguishable
  // from the very first step.
  n.gamma = Embedding::create(ps, name + ".gamma", k, c, rng, 1.0, 0.02);
  n.beta = Embedding::create(ps, name + ".beta", k, c, rng, 0.0, 0.02);
  return n;
}

VarPtr CondNorm::operator()(VarPtr x, const std::vector<int>& labels) const {
  return scale_shift_nc(channel_norm(std::move(x)), gamma(labels), beta(labels));
}

}  // namespace synood
