#include "milqt/losses.hpp"

#include "milqt/error.hpp"
#include "milqt/ops.hpp"

namespace milqt {

Tensor weight_by_awareness(Tape& tape, const Tensor& m_awn, const Tensor& v) {
  if (m_awn.size() != v.size()) {
    throw ShapeError("weight_by_awareness: " + shape_str(m_awn.shape()) + " vs " +
                     shape_str(v.shape()));
  }
  return mul(tape, m_awn, v);
}

Tensor soft_bce(Tape& tape, const Tensor& targets, const Tensor& logits) {
  if (targets.size() != logits.size()) {
    throw ShapeError("soft_bce: " + shape_str(targets.shape()) + " vs " +
                     shape_str(logits.shape()));
  }
  Tensor s = sigmoid(tape, logits);
  Tensor pos = mul(tape, targets, log_clamped(tape, s));
  Tensor neg = mul(tape, affine(tape, targets, -1.0, 1.0),
                   log_clamped(tape, affine(tape, s, -1.0, 1.0)));
  Tensor mean = reduce(tape, add(tape, pos, neg), Red::Mean);
  return affine(tape, mean, -1.0, 0.0);
}

Tensor type_nll(Tape& tape, const Tensor& h, std::size_t label) {
  if (h.rank() != 1) throw ShapeError("type_nll: h must be a vector");
  if (label >= h.extent(0)) {
    throw ValidationError("type_nll: label " + std::to_string(label) + " out of range for " +
                          std::to_string(h.extent(0)) + " types");
  }
  int row = static_cast<int>(label);
  Tensor picked = squeeze(tape, gather_rows(tape, as_col(tape, h), std::span<const int>(&row, 1)));
  return affine(tape, log_clamped(tape, picked), -1.0, 0.0);
}

Tensor combine_loss(Tape& tape, const SampleLossTerms& terms, const LossWeights& w,
                    double scale) {
  if (terms.hyp.empty()) throw ContractError("combine_loss: no hypothesis terms");
  Tensor acc = affine(tape, terms.hyp[0], w.hyp, 0.0);
  for (std::size_t j = 1; j < terms.hyp.size(); ++j) {
    acc = add(tape, acc, affine(tape, terms.hyp[j], w.hyp, 0.0));
  }
  acc = add(tape, acc, affine(tape, terms.vqa, w.vqa, 0.0));
  acc = add(tape, acc, affine(tape, terms.qt, w.qt, 0.0));
  return affine(tape, acc, scale, 0.0);
}

void LossBreakdown::add(const SampleLossTerms& terms, const LossWeights& w) {
  if (hyp.empty()) hyp.assign(terms.hyp.size(), 0.0);
  if (hyp.size() != terms.hyp.size()) throw ContractError("loss breakdown arity changed");
  double t = 0.0;
  for (std::size_t j = 0; j < terms.hyp.size(); ++j) {
    double v = terms.hyp[j].item();
    hyp[j] += v;
    t += w.hyp * v;
  }
  double v_vqa = terms.vqa.item();
  double v_qt = terms.qt.item();
  vqa += v_vqa;
  qt += v_qt;
  t += w.vqa * v_vqa + w.qt * v_qt;
  total += t;
  ++count;
}

void LossBreakdown::finish() {
  if (count == 0) return;
  double inv = 1.0 / static_cast<double>(count);
  for (double& v : hyp) v *= inv;
  vqa *= inv;
  qt *= inv;
  total *= inv;
  count = 1;  // idempotent
}

}  // namespace milqt
