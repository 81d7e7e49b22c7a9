#include "synood/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "synood/error.hpp"

namespace synood {

std::int64_t shape_size(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ValidationError("tensor shape has negative dimension");
    n *= d;
  }
  return n;
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)),
      v_(static_cast<std::size_t>(shape_size(shape_)), fill) {}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
  if (shape_size(shape) != static_cast<std::int64_t>(values.size())) {
    throw ValidationError("Tensor::from: value count does not match shape");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.v_ = std::move(values);
  return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
  if (shape_size(shape) != size()) {
    throw ValidationError("reshape changes element count");
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.v_ = v_;
  return t;
}

void Tensor::fill(double v) { std::fill(v_.begin(), v_.end(), v); }

bool Tensor::all_finite() const {
  for (double x : v_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Tensor::min() const {
  double m = std::numeric_limits<double>::infinity();
  for (double x : v_) m = std::min(m, x);
  return m;
}

double Tensor::max() const {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v_) m = std::max(m, x);
  return m;
}

double Tensor::sum() const { return std::accumulate(v_.begin(), v_.end(), 0.0); }

}  // namespace synood
