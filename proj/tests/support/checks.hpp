#pragma once

// Shared helpers for the test binaries: a central finite-difference
// gradient checker and a self-cleaning temporary directory.

#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <milqt/tape.hpp>
#include <milqt/tensor.hpp>

namespace milqt::testing {

// Max relative error between analytic gradients and central finite
// differences, over every coordinate of every listed parameter. `loss`
// must rebuild the whole graph from the tensors the pointers currently
// hold; the checker perturbs a coordinate by swapping in a replacement
// tensor, so closures have to read the parameters through the same
// storage the pointers refer to.
//
// Error measure: |analytic - fd| / max(floor, |analytic| + |fd|). The
// floor absorbs finite-difference noise on coordinates whose true
// gradient is zero (padding rows, detached branches).
inline double fd_max_rel_err(const std::vector<Tensor*>& params,
                             const std::function<Tensor(Tape&)>& loss,
                             double eps = 1e-5, double floor = 1e-6) {
  for (Tensor* p : params) p->zero_grad();
  {
    Tape tape;
    Tensor l = loss(tape);
    tape.backward(l);
    tape.accumulate_leaf_grads();
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) analytic.push_back(p->grad());

  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi];
    Tensor orig = *p;
    const std::vector<double>& base = orig.values();
    for (std::size_t i = 0; i < base.size(); ++i) {
      auto value_at = [&](double v) {
        std::vector<double> vals = base;
        vals[i] = v;
        *p = Tensor(orig.shape(), std::move(vals), true);
        Tape tape;
        return loss(tape).item();
      };
      double fp = value_at(base[i] + eps);
      double fm = value_at(base[i] - eps);
      *p = orig;
      double fd = (fp - fm) / (2.0 * eps);
      double a = analytic[pi][i];
      double err = std::abs(a - fd) / std::max(floor, std::abs(a) + std::abs(fd));
      if (err > worst) worst = err;
    }
  }
  return worst;
}

// Unique directory under the system temp root, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("milqt_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace milqt::testing
