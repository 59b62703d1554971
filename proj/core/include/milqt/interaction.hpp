#pragma once

// Combines the answer logits of several answering mechanisms ("hypotheses")
// into one logit vector, with mixing weights that depend on the question
// type through the type/answer co-occurrence matrix:
//
//   S = m^T · w_mil        (answers x hypotheses)
//   rho_a = sum_j S[a,j] * G[a,j]
//
// where m is the [types x answers] co-occurrence matrix, w_mil is a
// learnable [types x hypotheses] weight table initialised to 1/J, and G
// stacks the per-hypothesis logits column-wise ([answers x hypotheses]).
// Because every column of m sums to exactly 1, a single hypothesis with
// w_mil at its initial value of 1 passes through unchanged: rho == G[:,0].

#include <string>
#include <vector>

#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"

namespace milqt {

struct InteractionWeights {
  Tensor w_mil;  // [types x hypotheses], learnable

  static InteractionWeights init(std::size_t num_types, std::size_t num_hyps);
};

// S = prior_t · w_mil, optionally row-softmaxed so each answer's mixing
// weights form a distribution over hypotheses. prior_t is the transposed
// co-occurrence matrix [answers x types] and is treated as a constant.
Tensor mixing_table(Tape& tape, const Tensor& prior_t, const Tensor& w_mil,
                    bool softmax_rows);

// rho = rowwise sum of S ⊙ G. S and G are both [answers x hypotheses].
Tensor mix_hypotheses(Tape& tape, const Tensor& mixing, const Tensor& logits_aj);

// Baseline combiner: plain mean over hypotheses, ignoring the type.
Tensor average_hypotheses(Tape& tape, const Tensor& logits_aj);

// Human-readable dump of the learned table: one row per question type,
// one column per hypothesis. Loadable as CSV.
std::string interaction_csv(const Tensor& w_mil,
                            const std::vector<std::string>& qtype_names,
                            const std::vector<std::string>& hyp_names);

}  // namespace milqt
