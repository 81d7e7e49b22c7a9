#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "synood/autodiff.hpp"
#include "synood/cli.hpp"
#include "synood/rng.hpp"
#include "synood/tensor.hpp"

namespace testutil {

inline synood::Tensor random_tensor(std::vector<int> shape, synood::Rng& rng, double lo = -1.0,
                                    double hi = 1.0) {
  synood::Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

struct GradCheckResult {
  double max_abs_diff = 0.0;
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
};

// Central-difference gradient check. `build` must reconstruct the scalar loss
// graph from the (persistent) leaves on every call; the analytic gradients of
// one backward pass are compared against (f(x+h) - f(x-h)) / 2h coordinate by
// coordinate. The relative error is normalized by max(1, |num|, |ana|) so that
// near-zero gradients are judged on absolute terms.
inline GradCheckResult gradcheck(const std::vector<synood::VarPtr>& leaves,
                                 const std::function<synood::VarPtr()>& build,
                                 double h = 1e-5) {
  for (const synood::VarPtr& leaf : leaves) {
    leaf->ensure_grad();
    leaf->zero_grad();
  }
  synood::VarPtr root = build();
  synood::backward(root);
  std::vector<synood::Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const synood::VarPtr& leaf : leaves) analytic.push_back(leaf->grad);

  GradCheckResult result;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    synood::Tensor& value = leaves[li]->val;
    for (std::int64_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = build()->scalar();
      value[i] = saved - h;
      const double down = build()->scalar();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double ana = analytic[li][i];
      const double diff = std::abs(numeric - ana);
      const double rel = diff / std::max({1.0, std::abs(numeric), std::abs(ana)});
      result.max_abs_diff = std::max(result.max_abs_diff, diff);
      result.max_rel_err = std::max(result.max_rel_err, rel);
      ++result.checked;
    }
  }
  return result;
}

// Unique scratch directory under the system temp root, removed on
// destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path_.string() : (path_ / child).string();
  }

 private:
  std::filesystem::path path_;
};

// argv adapter for driving cli_main in-process.
inline int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "synood");
  std::vector<char*> argv;
  argv.reserve(args.size());
  for (std::string& a : args) argv.push_back(a.data());
  return synood::cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace testutil
