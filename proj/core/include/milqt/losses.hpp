#pragma once

// Training objective: a soft binary cross-entropy over answers for every
// hypothesis and for the combined logits, plus a question-type
// classification term, summed with configurable weights:
//
//   total = a_hyp * sum_j l_H[j] + a_vqa * l_vqa + a_qt * l_qt
//
// Each hypothesis is scored against the raw targets and its own logits;
// only the combined-logits loss uses the prior-weighted pair
// (y_hat = m ⊙ y, g_hat = m ⊙ g), so answers implausible for the predicted
// question type contribute little there. Each term is a per-sample mean so
// batch aggregation is a plain average.

#include <cstddef>
#include <vector>

#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"

namespace milqt {

struct LossWeights {
  double hyp = 1.0;  // each per-hypothesis answer loss
  double vqa = 1.0;  // combined-logits answer loss
  double qt = 1.0;   // question-type classification loss
};

// Elementwise m ⊙ v. Gradient flows into both operands.
Tensor weight_by_awareness(Tape& tape, const Tensor& m_awn, const Tensor& v);

// -(1/A) * sum_a [ t_a log s_a + (1 - t_a) log(1 - s_a) ],  s = sigmoid(g).
// Logs are clamped at the library-wide floor, so saturated sigmoids yield
// large finite losses rather than infinities.
Tensor soft_bce(Tape& tape, const Tensor& targets, const Tensor& logits);

// -log h[label], clamped. h must be a probability vector over types.
Tensor type_nll(Tape& tape, const Tensor& h, std::size_t label);

struct SampleLossTerms {
  std::vector<Tensor> hyp;  // scalar per hypothesis
  Tensor vqa;
  Tensor qt;
};

// Scalar combination of one sample's terms, scaled by `scale` (use 1/Q so
// that summing per-sample gradients reproduces the batch mean).
Tensor combine_loss(Tape& tape, const SampleLossTerms& terms, const LossWeights& w,
                    double scale);

// Numeric running means for logging; one add() per sample.
struct LossBreakdown {
  std::vector<double> hyp;
  double vqa = 0.0;
  double qt = 0.0;
  double total = 0.0;
  std::size_t count = 0;

  void add(const SampleLossTerms& terms, const LossWeights& w);
  // Divide accumulated sums by count; no-op when empty.
  void finish();
};

}  // namespace milqt
