#include "milqt/interaction.hpp"

#include "milqt/error.hpp"
#include "milqt/ops.hpp"
#include "milqt/util.hpp"

namespace milqt {

InteractionWeights InteractionWeights::init(std::size_t num_types, std::size_t num_hyps) {
  if (num_types == 0 || num_hyps == 0) {
    throw ValidationError("interaction weights need at least one type and one hypothesis");
  }
  InteractionWeights w;
  w.w_mil = Tensor::full({num_types, num_hyps}, 1.0 / static_cast<double>(num_hyps), true);
  return w;
}

Tensor mixing_table(Tape& tape, const Tensor& prior_t, const Tensor& w_mil,
                    bool softmax_rows) {
  if (prior_t.rank() != 2 || w_mil.rank() != 2 || prior_t.extent(1) != w_mil.extent(0)) {
    throw ShapeError("mixing_table: prior_t " + shape_str(prior_t.shape()) + " vs w_mil " +
                     shape_str(w_mil.shape()));
  }
  Tensor s = matmul(tape, prior_t, w_mil);
  return softmax_rows ? softmax_lastdim(tape, s) : s;
}

Tensor mix_hypotheses(Tape& tape, const Tensor& mixing, const Tensor& logits_aj) {
  if (!same_shape(mixing.shape(), logits_aj.shape())) {
    throw ShapeError("mix_hypotheses: " + shape_str(mixing.shape()) + " vs " +
                     shape_str(logits_aj.shape()));
  }
  return reduce(tape, mul(tape, mixing, logits_aj), Red::Sum, 1);
}

Tensor average_hypotheses(Tape& tape, const Tensor& logits_aj) {
  if (logits_aj.rank() != 2) throw ShapeError("average_hypotheses: want [answers x hyps]");
  return reduce(tape, logits_aj, Red::Mean, 1);
}

std::string interaction_csv(const Tensor& w_mil,
                            const std::vector<std::string>& qtype_names,
                            const std::vector<std::string>& hyp_names) {
  if (w_mil.rank() != 2 || w_mil.extent(0) != qtype_names.size() ||
      w_mil.extent(1) != hyp_names.size()) {
    throw ShapeError("interaction_csv: table " + shape_str(w_mil.shape()) + " vs " +
                     std::to_string(qtype_names.size()) + " types, " +
                     std::to_string(hyp_names.size()) + " hypotheses");
  }
  std::string out = "qtype";
  for (const auto& h : hyp_names) out += "," + h;
  out += "\n";
  for (std::size_t p = 0; p < qtype_names.size(); ++p) {
    out += qtype_names[p];
    for (std::size_t j = 0; j < hyp_names.size(); ++j) {
      out += "," + fmt_double(w_mil.at(p, j));
    }
    out += "\n";
  }
  return out;
}

}  // namespace milqt
