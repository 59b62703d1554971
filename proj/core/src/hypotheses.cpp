#include "milqt/hypotheses.hpp"

#include "milqt/encoders.hpp"
#include "milqt/error.hpp"

namespace milqt {

std::string hyp_kind_name(HypKind kind) {
  switch (kind) {
    case HypKind::TopDown: return "topdown";
    case HypKind::BilinearLowRank: return "bilinear_lowrank";
    case HypKind::Stacked2: return "stacked2";
  }
  throw ContractError("unknown hypothesis kind");
}

HypKind hyp_kind_from(std::string_view name) {
  if (name == "topdown") return HypKind::TopDown;
  if (name == "bilinear_lowrank") return HypKind::BilinearLowRank;
  if (name == "stacked2") return HypKind::Stacked2;
  throw ValidationError("unknown hypothesis kind '" + std::string(name) + "'");
}

FusionOp fusion_from(std::string_view name) {
  if (name == "ewm") return FusionOp::EWM;
  if (name == "ewa") return FusionOp::EWA;
  throw ValidationError("unknown fusion op '" + std::string(name) + "' (ewm or ewa)");
}

std::string fusion_name(FusionOp op) { return op == FusionOp::EWM ? "ewm" : "ewa"; }

HypothesisSpec HypothesisSpec::init(HypKind kind, const HypothesisSizes& sizes,
                                    std::size_t num_answers, Rng& rng) {
  HypothesisSpec hyp;
  hyp.kind = kind;
  switch (kind) {
    case HypKind::TopDown:
      hyp.td_w_v = xavier_uniform(sizes.att_hidden, sizes.d_v, rng);
      hyp.td_w_q = xavier_uniform(sizes.att_hidden, sizes.d_h, rng);
      hyp.td_w_s = xavier_uniform(1, sizes.att_hidden, rng);
      hyp.td_w_o = xavier_uniform(sizes.d_f, sizes.d_v, rng);
      hyp.td_w_p = xavier_uniform(sizes.d_f, sizes.d_h, rng);
      break;
    case HypKind::BilinearLowRank:
      hyp.bl_u = xavier_uniform(sizes.lowrank, sizes.d_v, rng);
      hyp.bl_v = xavier_uniform(sizes.lowrank, sizes.d_h, rng);
      hyp.bl_w_o = xavier_uniform(sizes.d_f, sizes.lowrank, rng);
      break;
    case HypKind::Stacked2:
      hyp.st_w_v1 = xavier_uniform(sizes.stacked_hidden, sizes.d_v, rng);
      hyp.st_w_q1 = xavier_uniform(sizes.stacked_hidden, sizes.d_h, rng);
      hyp.st_w_s1 = xavier_uniform(1, sizes.stacked_hidden, rng);
      hyp.st_w_c1 = xavier_uniform(sizes.d_h, sizes.d_v, rng);
      hyp.st_w_v2 = xavier_uniform(sizes.stacked_hidden, sizes.d_v, rng);
      hyp.st_w_q2 = xavier_uniform(sizes.stacked_hidden, sizes.d_h, rng);
      hyp.st_w_s2 = xavier_uniform(1, sizes.stacked_hidden, rng);
      hyp.st_w_c2 = xavier_uniform(sizes.d_h, sizes.d_v, rng);
      hyp.st_w_o = xavier_uniform(sizes.d_f, sizes.d_h, rng);
      break;
  }
  hyp.head_w = xavier_uniform(num_answers, sizes.d_f, rng);
  hyp.head_b = Tensor::zeros({num_answers}, true);
  return hyp;
}

std::vector<std::pair<std::string, Tensor*>> HypothesisSpec::params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  switch (kind) {
    case HypKind::TopDown:
      out = {{"w_v", &td_w_v}, {"w_q", &td_w_q}, {"w_s", &td_w_s},
             {"w_o", &td_w_o}, {"w_p", &td_w_p}};
      break;
    case HypKind::BilinearLowRank:
      out = {{"u", &bl_u}, {"v", &bl_v}, {"w_o", &bl_w_o}};
      break;
    case HypKind::Stacked2:
      out = {{"hop1.w_v", &st_w_v1}, {"hop1.w_q", &st_w_q1}, {"hop1.w_s", &st_w_s1},
             {"hop1.w_c", &st_w_c1}, {"hop2.w_v", &st_w_v2}, {"hop2.w_q", &st_w_q2},
             {"hop2.w_s", &st_w_s2}, {"hop2.w_c", &st_w_c2}, {"w_o", &st_w_o}};
      break;
  }
  out.emplace_back("head_w", &head_w);
  out.emplace_back("head_b", &head_b);
  return out;
}

namespace {

// Scores [1 x K] -> attention row, plus the weighted sum of value rows
// [K x D] -> [D] as a matmul of the attention row with the value matrix.
Tensor attention_pool(Tape& tape, const Tensor& att_row, const Tensor& values) {
  return squeeze(tape, matmul(tape, att_row, values));
}

FirstFuse topdown_fuse(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                       const Tensor& f_q) {
  std::size_t regions = f_v.extent(0);
  // Projected question [att_hidden], broadcast against every region.
  Tensor q_proj = squeeze(tape, matmul(tape, hyp.td_w_q, as_col(tape, f_q)));
  std::vector<Tensor> scores;
  scores.reserve(regions);
  for (std::size_t k = 0; k < regions; ++k) {
    int row = static_cast<int>(k);
    Tensor v_k = squeeze(tape, gather_rows(tape, f_v, std::span<const int>(&row, 1)));
    Tensor v_proj = squeeze(tape, matmul(tape, hyp.td_w_v, as_col(tape, v_k)));
    Tensor joint = relu(tape, mul(tape, v_proj, q_proj));
    scores.push_back(squeeze(tape, matmul(tape, hyp.td_w_s, as_col(tape, joint))));
  }
  Tensor score_vec = squeeze(tape, stack_cols(tape, scores));
  Tensor att = softmax_lastdim(tape, score_vec);
  Tensor att_row = as_row(tape, att);
  Tensor pooled = attention_pool(tape, att_row, f_v);  // [D_v]
  Tensor lhs = squeeze(tape, matmul(tape, hyp.td_w_o, as_col(tape, pooled)));
  Tensor rhs = squeeze(tape, matmul(tape, hyp.td_w_p, as_col(tape, f_q)));
  return {mul(tape, lhs, rhs), att_row};
}

FirstFuse bilinear_fuse(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                        const Tensor& f_q) {
  std::size_t regions = f_v.extent(0);
  Tensor q_proj = squeeze(tape, matmul(tape, hyp.bl_v, as_col(tape, f_q)));  // [R]
  std::vector<Tensor> scores;
  std::vector<Tensor> products;  // per region, (U v_k) * (V q) in rank space
  scores.reserve(regions);
  products.reserve(regions);
  for (std::size_t k = 0; k < regions; ++k) {
    int row = static_cast<int>(k);
    Tensor v_k = squeeze(tape, gather_rows(tape, f_v, std::span<const int>(&row, 1)));
    Tensor v_proj = squeeze(tape, matmul(tape, hyp.bl_u, as_col(tape, v_k)));
    Tensor prod = mul(tape, v_proj, q_proj);
    products.push_back(prod);
    scores.push_back(reduce(tape, prod, Red::Sum));
  }
  Tensor score_vec = squeeze(tape, stack_cols(tape, scores));
  Tensor att = softmax_lastdim(tape, score_vec);
  Tensor att_row = as_row(tape, att);
  // Pool the rank-space products with the attention row: [1xK] * [KxR].
  Tensor prod_mat = stack_cols(tape, products);           // [R x K]
  Tensor pooled = squeeze(tape, matmul(tape, prod_mat, as_col(tape, att)));  // [R]
  Tensor f_att = squeeze(tape, matmul(tape, hyp.bl_w_o, as_col(tape, pooled)));
  return {f_att, att_row};
}

struct HopOut {
  Tensor context;  // [D_h]
  Tensor att_row;  // [1 x K]
};

HopOut stacked_hop(Tape& tape, const Tensor& w_v, const Tensor& w_q, const Tensor& w_s,
                   const Tensor& w_c, const Tensor& f_v, const Tensor& query) {
  std::size_t regions = f_v.extent(0);
  Tensor q_proj = squeeze(tape, matmul(tape, w_q, as_col(tape, query)));
  std::vector<Tensor> scores;
  scores.reserve(regions);
  for (std::size_t k = 0; k < regions; ++k) {
    int row = static_cast<int>(k);
    Tensor v_k = squeeze(tape, gather_rows(tape, f_v, std::span<const int>(&row, 1)));
    Tensor v_proj = squeeze(tape, matmul(tape, w_v, as_col(tape, v_k)));
    Tensor e_k = tanh_act(tape, add(tape, v_proj, q_proj));
    scores.push_back(squeeze(tape, matmul(tape, w_s, as_col(tape, e_k))));
  }
  Tensor att = softmax_lastdim(tape, squeeze(tape, stack_cols(tape, scores)));
  Tensor att_row = as_row(tape, att);
  Tensor pooled = attention_pool(tape, att_row, f_v);                       // [D_v]
  Tensor context = squeeze(tape, matmul(tape, w_c, as_col(tape, pooled)));  // [D_h]
  return {context, att_row};
}

FirstFuse stacked2_fuse(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                        const Tensor& f_q) {
  HopOut hop1 = stacked_hop(tape, hyp.st_w_v1, hyp.st_w_q1, hyp.st_w_s1, hyp.st_w_c1, f_v, f_q);
  Tensor q1 = add(tape, f_q, hop1.context);
  HopOut hop2 = stacked_hop(tape, hyp.st_w_v2, hyp.st_w_q2, hyp.st_w_s2, hyp.st_w_c2, f_v, q1);
  Tensor q2 = add(tape, q1, hop2.context);
  Tensor f_att = squeeze(tape, matmul(tape, hyp.st_w_o, as_col(tape, q2)));
  // Diagnostic attention matrix [2 x K]: one row per hop, values only.
  std::size_t regions = f_v.extent(0);
  std::vector<double> att_vals(2 * regions);
  const auto& a1v = hop1.att_row.values();
  const auto& a2v = hop2.att_row.values();
  for (std::size_t k = 0; k < regions; ++k) {
    att_vals[k] = a1v[k];
    att_vals[regions + k] = a2v[k];
  }
  return {f_att, Tensor({2, regions}, std::move(att_vals))};
}

}  // namespace

FirstFuse first_level_fuse(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                           const Tensor& f_q) {
  if (f_v.rank() != 2) throw ShapeError("first_level_fuse: f_v must be [K x D_v]");
  switch (hyp.kind) {
    case HypKind::TopDown: return topdown_fuse(tape, hyp, f_v, f_q);
    case HypKind::BilinearLowRank: return bilinear_fuse(tape, hyp, f_v, f_q);
    case HypKind::Stacked2: return stacked2_fuse(tape, hyp, f_v, f_q);
  }
  throw ContractError("unknown hypothesis kind");
}

Tensor second_level_fuse(Tape& tape, const Tensor& f_att, const Tensor& f_qt, FusionOp op) {
  if (f_att.size() != f_qt.size()) {
    throw ShapeError("second_level_fuse: " + shape_str(f_att.shape()) + " vs " +
                     shape_str(f_qt.shape()));
  }
  return op == FusionOp::EWM ? mul(tape, f_att, f_qt) : add(tape, f_att, f_qt);
}

Tensor answer_logits(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_att_qt) {
  return add(tape, squeeze(tape, matmul(tape, hyp.head_w, as_col(tape, f_att_qt))),
             hyp.head_b);
}

HypothesisOutput hypothesis_forward(Tape& tape, const HypothesisSpec& hyp, const Tensor& f_v,
                                    const Tensor& f_q, const Tensor& f_qt, FusionOp op) {
  FirstFuse first = first_level_fuse(tape, hyp, f_v, f_q);
  HypothesisOutput out;
  out.f_att = first.f_att;
  out.attention = first.attention;
  out.f_att_qt = second_level_fuse(tape, out.f_att, f_qt, op);
  out.logits = answer_logits(tape, hyp, out.f_att_qt);
  return out;
}

}  // namespace milqt
