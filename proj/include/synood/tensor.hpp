#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace synood {

// Dense row-major tensor of doubles. Shapes follow the (N, C, H, W)
// convention for image batches; 1-D and 2-D tensors are used freely for
// vectors and matrices.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0);
  Tensor(std::initializer_list<int> shape, double fill = 0.0)
      : Tensor(std::vector<int>(shape), fill) {}

  static Tensor from(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

  std::vector<double>& vec() { return v_; }
  const std::vector<double>& vec() const { return v_; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  Tensor reshaped(std::vector<int> shape) const;

  void fill(double v);
  void zero() { fill(0.0); }

  bool all_finite() const;
  double min() const;
  double max() const;
  double sum() const;

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

std::int64_t shape_size(const std::vector<int>& shape);

}  // namespace synood
