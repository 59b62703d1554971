#pragma once

#include <cstdint>
#include <span>

#include "milqt/dataset.hpp"
#include "milqt/ops.hpp"
#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"
#include "milqt/util.hpp"

namespace milqt {

// Xavier-uniform matrix [rows x cols]; bound sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Trainable token embedding table [V x D_w].
Tensor make_embedding_table(std::size_t vocab_size, std::size_t embed_width, Rng& rng);

// Token rows from the table, [T x D_w]. Padding tokens produce zero rows
// and route no gradient; every other token trains its table row.
Tensor embed_question(Tape& tape, const Tensor& table, std::span<const int> tokens);

// Gated recurrent unit, single layer, forward direction, zero initial state.
struct GruParams {
  Tensor w_z, u_z, b_z;  // update gate
  Tensor w_r, u_r, b_r;  // reset gate
  Tensor w_h, u_h, b_h;  // candidate state
  static GruParams init(std::size_t in_width, std::size_t state_width, Rng& rng);
  std::size_t state_width() const { return b_z.size(); }
};

// Final hidden state [D_h] after consuming every row of f_w in order:
//   z = sigmoid(W_z x + U_z h + b_z)
//   r = sigmoid(W_r x + U_r h + b_r)
//   hc = tanh(W_h x + U_h (r * h) + b_h)
//   h' = (1 - z) * h + z * hc
Tensor gru_encode(Tape& tape, const Tensor& f_w, const GruParams& gru);

// Question-type classifier. f_qt = relu(fc1 f_q + b1) is the type feature
// reused by the second-level fusion; h = softmax(fc2 f_qt + b2).
struct QTypeHead {
  Tensor fc1_w, fc1_b;  // [D_f x D_h], [D_f]
  Tensor fc2_w, fc2_b;  // [P x D_f], [P]
  static QTypeHead init(std::size_t in_width, std::size_t feat_width, std::size_t num_types,
                        Rng& rng);
};

struct QTypeOut {
  Tensor h;     // [P] distribution
  Tensor f_qt;  // [D_f]
};
QTypeOut qtype_forward(Tape& tape, const Tensor& f_q, const QTypeHead& head);

// Visual features for one sample: the record's inline tensor or a block of
// a feature file. The result is a frozen constant [K x D_v]; it is never a
// tape leaf, so backward leaves it untouched.
Tensor load_visual(const FeatureStore& store, const FeatureRef& ref, std::size_t num_regions,
                   std::size_t region_width);

}  // namespace milqt
