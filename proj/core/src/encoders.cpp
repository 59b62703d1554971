#include "milqt/encoders.hpp"

#include <cmath>

#include "milqt/error.hpp"

namespace milqt {

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor({rows, cols}, std::move(v), true);
}

Tensor make_embedding_table(std::size_t vocab_size, std::size_t embed_width, Rng& rng) {
  return xavier_uniform(vocab_size, embed_width, rng);
}

Tensor embed_question(Tape& tape, const Tensor& table, std::span<const int> tokens) {
  if (table.rank() != 2) throw ShapeError("embed_question: table must be rank 2");
  std::vector<int> rows(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    int tok = tokens[t];
    if (tok < 0 || static_cast<std::size_t>(tok) >= table.extent(0)) {
      throw ValidationError("embed_question: token index " + std::to_string(tok) +
                            " out of range for table " + shape_str(table.shape()));
    }
    rows[t] = tok == Vocabulary::kPad ? -1 : tok;
  }
  return gather_rows(tape, table, rows);
}

GruParams GruParams::init(std::size_t in_width, std::size_t state_width, Rng& rng) {
  GruParams g;
  g.w_z = xavier_uniform(state_width, in_width, rng);
  g.u_z = xavier_uniform(state_width, state_width, rng);
  g.b_z = Tensor::zeros({state_width}, true);
  g.w_r = xavier_uniform(state_width, in_width, rng);
  g.u_r = xavier_uniform(state_width, state_width, rng);
  g.b_r = Tensor::zeros({state_width}, true);
  g.w_h = xavier_uniform(state_width, in_width, rng);
  g.u_h = xavier_uniform(state_width, state_width, rng);
  g.b_h = Tensor::zeros({state_width}, true);
  return g;
}

namespace {

// W x + U s + b for column vectors, squeezed back to rank 1.
Tensor gate_preact(Tape& tape, const Tensor& w, const Tensor& x, const Tensor& u,
                   const Tensor& s, const Tensor& b) {
  Tensor wx = squeeze(tape, matmul(tape, w, as_col(tape, x)));
  Tensor us = squeeze(tape, matmul(tape, u, as_col(tape, s)));
  return add(tape, add(tape, wx, us), b);
}

}  // namespace

Tensor gru_encode(Tape& tape, const Tensor& f_w, const GruParams& gru) {
  if (f_w.rank() != 2) throw ShapeError("gru_encode: input must be [T x D_w]");
  std::size_t steps = f_w.extent(0);
  std::size_t width = gru.state_width();
  Tensor h = Tensor::zeros({width});
  for (std::size_t t = 0; t < steps; ++t) {
    int row = static_cast<int>(t);
    Tensor x = squeeze(tape, gather_rows(tape, f_w, std::span<const int>(&row, 1)));
    Tensor z = sigmoid(tape, gate_preact(tape, gru.w_z, x, gru.u_z, h, gru.b_z));
    Tensor r = sigmoid(tape, gate_preact(tape, gru.w_r, x, gru.u_r, h, gru.b_r));
    Tensor rh = mul(tape, r, h);
    Tensor hc = tanh_act(tape, gate_preact(tape, gru.w_h, x, gru.u_h, rh, gru.b_h));
    Tensor keep = mul(tape, affine(tape, z, -1.0, 1.0), h);
    h = add(tape, keep, mul(tape, z, hc));
  }
  return h;
}

QTypeHead QTypeHead::init(std::size_t in_width, std::size_t feat_width, std::size_t num_types,
                          Rng& rng) {
  QTypeHead head;
  head.fc1_w = xavier_uniform(feat_width, in_width, rng);
  head.fc1_b = Tensor::zeros({feat_width}, true);
  head.fc2_w = xavier_uniform(num_types, feat_width, rng);
  head.fc2_b = Tensor::zeros({num_types}, true);
  return head;
}

QTypeOut qtype_forward(Tape& tape, const Tensor& f_q, const QTypeHead& head) {
  Tensor pre1 = add(tape, squeeze(tape, matmul(tape, head.fc1_w, as_col(tape, f_q))),
                    head.fc1_b);
  Tensor f_qt = relu(tape, pre1);
  Tensor pre2 = add(tape, squeeze(tape, matmul(tape, head.fc2_w, as_col(tape, f_qt))),
                    head.fc2_b);
  return {softmax_lastdim(tape, pre2), f_qt};
}

Tensor load_visual(const FeatureStore& store, const FeatureRef& ref, std::size_t num_regions,
                   std::size_t region_width) {
  const Tensor& t = ref.is_inline() ? ref.inline_features : store.block(ref.path, ref.row);
  if (t.rank() != 2 || t.extent(0) != num_regions || t.extent(1) != region_width) {
    throw ShapeError("visual features are " + shape_str(t.shape()) + ", expected [" +
                     std::to_string(num_regions) + "x" + std::to_string(region_width) + "]");
  }
  if (t.requires_grad()) throw ContractError("visual features must be frozen");
  return t;
}

}  // namespace milqt
