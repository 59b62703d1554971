#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "milqt/ops.hpp"
#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"
#include "milqt/util.hpp"

namespace milqt {

// Joint-modality attention mechanisms. Each hypothesis owns one mechanism
// plus its own answer head; several hypotheses run in parallel over the
// same inputs and are reconciled downstream.
enum class HypKind { TopDown, BilinearLowRank, Stacked2 };

std::string hyp_kind_name(HypKind kind);
HypKind hyp_kind_from(std::string_view name);

struct HypothesisSizes {
  std::size_t d_v = 8;    // region feature width
  std::size_t d_h = 48;   // question feature width
  std::size_t d_f = 48;   // fused feature width
  std::size_t regions = 4;
  std::size_t att_hidden = 48;      // TopDown score net width
  std::size_t lowrank = 16;         // BilinearLowRank rank
  std::size_t stacked_hidden = 48;  // Stacked2 hop width
};

// Parameters of one hypothesis. Only the members of its kind are defined.
struct HypothesisSpec {
  HypKind kind = HypKind::TopDown;

  // TopDown: score_k = w_s . relu(W_v v_k * W_q q); value path
  // f_att = (W_o sum_k a_k v_k) * (W_p q).
  Tensor td_w_v, td_w_q, td_w_s, td_w_o, td_w_p;

  // BilinearLowRank: score_k = (U v_k) . (V q); f_att = W_o sum_k a_k (U v_k * V q).
  Tensor bl_u, bl_v, bl_w_o;

  // Stacked2: per hop, e_k = tanh(W_v v_k + W_q q), score_k = w_s . e_k,
  // context = sum_k a_k (W_c v_k); the query is refined between hops and
  // f_att = W_o (q2 + context2).
  Tensor st_w_v1, st_w_q1, st_w_s1, st_w_c1;
  Tensor st_w_v2, st_w_q2, st_w_s2, st_w_c2;
  Tensor st_w_o;

  // Answer head shared by every kind: logits = head_w f_att_qt + head_b.
  Tensor head_w, head_b;  // [A x D_f], [A]

  static HypothesisSpec init(HypKind kind, const HypothesisSizes& sizes,
                             std::size_t num_answers, Rng& rng);
  // Parameters in a stable order, named for checkpoints.
  std::vector<std::pair<std::string, Tensor*>> params();
};

struct FirstFuse {
  Tensor f_att;      // [D_f]
  Tensor attention;  // [hops x K]; each row is a distribution over regions
};

// Attends the K regions with the question feature and fuses to f_att.
FirstFuse first_level_fuse(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                           const Tensor& f_q);

enum class FusionOp { EWM, EWA };
FusionOp fusion_from(std::string_view name);
std::string fusion_name(FusionOp op);

// Combines the attended feature with the question-type feature.
Tensor second_level_fuse(Tape& tape, const Tensor& f_att, const Tensor& f_qt, FusionOp op);

// Pre-sigmoid answer logits [A].
Tensor answer_logits(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_att_qt);

struct HypothesisOutput {
  Tensor f_att;
  Tensor f_att_qt;
  Tensor logits;
  Tensor attention;
};

// first_level_fuse + second_level_fuse + answer_logits in one call.
HypothesisOutput hypothesis_forward(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                                    const Tensor& f_q, const Tensor& f_qt, FusionOp op);

}  // namespace milqt
