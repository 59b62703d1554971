#pragma once

// AdaMax with bias-corrected step size and global gradient-norm clipping:
//
//   m <- b1 m + (1 - b1) g        u <- max(b2 u, |g|)
//   theta <- theta - lr / (1 - b1^t) * m / (u + eps)
//
// Gradients above clip_norm (euclidean norm over ALL parameters) are
// scaled down before entering the moments. Parameter tensors are replaced
// wholesale on every step, which also leaves each with a fresh zero
// gradient buffer for the next batch.

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "milqt/tensor.hpp"

namespace milqt {

struct AdamaxConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Euclidean norm of the concatenation of every parameter's gradient.
double global_grad_norm(const std::vector<std::pair<std::string, Tensor*>>& params);

class Adamax {
 public:
  Adamax(std::vector<std::pair<std::string, Tensor*>> params, AdamaxConfig cfg = {});

  // One update from the gradients currently on the parameters. Returns the
  // pre-clip global norm. Throws DivergenceError on non-finite gradients
  // or parameter values.
  double step();

  std::size_t step_count() const { return t_; }
  const AdamaxConfig& config() const { return cfg_; }

  // Moment snapshots named "<param>.m" / "<param>.u", for checkpoints.
  std::vector<std::pair<std::string, Tensor>> state() const;
  void restore(std::size_t step_count, const std::map<std::string, Tensor>& state);

 private:
  std::vector<std::pair<std::string, Tensor*>> params_;
  std::vector<std::vector<double>> m_, u_;
  AdamaxConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace milqt
