#include "milqt/model.hpp"

#include <algorithm>
#include <cmath>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

HypothesisSizes ModelDims::hyp_sizes() const {
  HypothesisSizes s;
  s.d_v = region_width;
  s.d_h = hidden;
  s.d_f = fused;
  s.regions = regions;
  s.att_hidden = att_hidden;
  s.lowrank = lowrank;
  s.stacked_hidden = stacked_hidden;
  return s;
}

void ModelDims::validate() const {
  auto need = [](std::size_t v, const char* what) {
    if (v == 0) throw ValidationError(std::string("model dims: ") + what + " must be positive");
  };
  need(vocab, "vocab");
  need(embed, "embed");
  need(hidden, "hidden");
  need(fused, "fused");
  need(regions, "regions");
  need(region_width, "region_width");
  need(num_types, "num_types");
  need(num_answers, "num_answers");
  need(att_hidden, "att_hidden");
  need(lowrank, "lowrank");
  need(stacked_hidden, "stacked_hidden");
  if (vocab < 2) throw ValidationError("model dims: vocab must include the special tokens");
}

HMode h_mode_from(std::string_view name) {
  if (name == "predicted") return HMode::Predicted;
  if (name == "groundtruth") return HMode::Groundtruth;
  throw ValidationError("unknown h mode '" + std::string(name) +
                        "' (predicted or groundtruth)");
}

std::string h_mode_name(HMode mode) {
  return mode == HMode::Predicted ? "predicted" : "groundtruth";
}

InteractionMode interaction_from(std::string_view name) {
  if (name == "learned") return InteractionMode::Learned;
  if (name == "averaging") return InteractionMode::Averaging;
  if (name == "single") return InteractionMode::Single;
  throw ValidationError("unknown interaction mode '" + std::string(name) +
                        "' (learned, averaging or single)");
}

std::string interaction_name(InteractionMode mode) {
  switch (mode) {
    case InteractionMode::Learned: return "learned";
    case InteractionMode::Averaging: return "averaging";
    case InteractionMode::Single: return "single";
  }
  throw ContractError("unknown interaction mode");
}

std::vector<HypKind> parse_kinds(std::string_view csv) {
  std::vector<HypKind> kinds;
  for (const auto& part : split(csv, ',')) {
    std::string name{trim(part)};
    if (name.empty()) continue;
    kinds.push_back(hyp_kind_from(name));
  }
  if (kinds.empty()) throw ValidationError("hypothesis list is empty");
  return kinds;
}

std::string kinds_csv(std::span<const HypKind> kinds) {
  std::string out;
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    if (j) out += ",";
    out += hyp_kind_name(kinds[j]);
  }
  return out;
}

ModelParams ModelParams::init(const ModelDims& dims, std::span<const HypKind> kinds,
                              PriorMatrix prior, Rng& rng) {
  dims.validate();
  if (kinds.empty()) throw ValidationError("model needs at least one hypothesis");
  if (prior.num_types() != dims.num_types || prior.num_answers() != dims.num_answers) {
    throw ShapeError("prior " + shape_str(prior.m.shape()) + " does not match model dims");
  }
  ModelParams p;
  p.dims = dims;
  p.kinds.assign(kinds.begin(), kinds.end());
  p.embed = make_embedding_table(dims.vocab, dims.embed, rng);
  p.gru = GruParams::init(dims.embed, dims.hidden, rng);
  p.qhead = QTypeHead::init(dims.hidden, dims.fused, dims.num_types, rng);
  HypothesisSizes sizes = dims.hyp_sizes();
  p.hyps.reserve(kinds.size());
  for (HypKind kind : kinds) {
    p.hyps.push_back(HypothesisSpec::init(kind, sizes, dims.num_answers, rng));
  }
  p.interaction = InteractionWeights::init(dims.num_types, kinds.size());
  p.set_prior(std::move(prior));
  return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed", &embed);
  out.emplace_back("gru.w_z", &gru.w_z);
  out.emplace_back("gru.u_z", &gru.u_z);
  out.emplace_back("gru.b_z", &gru.b_z);
  out.emplace_back("gru.w_r", &gru.w_r);
  out.emplace_back("gru.u_r", &gru.u_r);
  out.emplace_back("gru.b_r", &gru.b_r);
  out.emplace_back("gru.w_h", &gru.w_h);
  out.emplace_back("gru.u_h", &gru.u_h);
  out.emplace_back("gru.b_h", &gru.b_h);
  out.emplace_back("qtype.fc1_w", &qhead.fc1_w);
  out.emplace_back("qtype.fc1_b", &qhead.fc1_b);
  out.emplace_back("qtype.fc2_w", &qhead.fc2_w);
  out.emplace_back("qtype.fc2_b", &qhead.fc2_b);
  for (std::size_t j = 0; j < hyps.size(); ++j) {
    std::string stem = "hyp" + std::to_string(j) + ".";
    for (auto& [name, tensor] : hyps[j].params()) {
      out.emplace_back(stem + name, tensor);
    }
  }
  out.emplace_back("w_mil", &interaction.w_mil);
  return out;
}

void ModelParams::set_prior(PriorMatrix new_prior) {
  if (new_prior.num_types() != dims.num_types ||
      new_prior.num_answers() != dims.num_answers) {
    throw ShapeError("prior " + shape_str(new_prior.m.shape()) + " does not match model dims");
  }
  prior = std::move(new_prior);
  prior_t = prior.transposed();
}

std::vector<std::string> ModelParams::hyp_names() const {
  std::vector<std::string> names;
  names.reserve(kinds.size());
  for (std::size_t j = 0; j < kinds.size(); ++j) {
    names.push_back("h" + std::to_string(j) + "_" + hyp_kind_name(kinds[j]));
  }
  return names;
}

namespace {

std::size_t argmax(std::span<const double> v) {
  // Lowest index wins ties.
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Tensor one_hot(std::size_t index, std::size_t n) {
  std::vector<double> v(n, 0.0);
  v[index] = 1.0;
  return Tensor({n}, std::move(v));
}

}  // namespace

int SampleForward::predicted_answer() const {
  return static_cast<int>(argmax(scores));
}

std::size_t SampleForward::predicted_type() const {
  return argmax(h.values());
}

SampleForward model_forward(Tape& tape, const ModelParams& params, const SampleRecord& rec,
                            const FeatureStore& store, const ModelOptions& opt) {
  const ModelDims& dims = params.dims;
  SampleForward fwd;

  Tensor f_w = embed_question(tape, params.embed, rec.tokens);
  Tensor f_q = gru_encode(tape, f_w, params.gru);
  QTypeOut qt = qtype_forward(tape, f_q, params.qhead);
  fwd.h = qt.h;

  // The answer branch optionally sees the type signal without feeding
  // gradient back into the classifier.
  Tensor h_for_answers = opt.stop_gradient_h ? qt.h.detach() : qt.h;
  fwd.f_qt = opt.stop_gradient_h ? qt.f_qt.detach() : qt.f_qt;

  if (opt.h_mode == HMode::Predicted) {
    fwd.m_awn = awareness(tape, h_for_answers, params.prior);
  } else {
    if (rec.qtype < 0 || static_cast<std::size_t>(rec.qtype) >= dims.num_types) {
      throw ValidationError("sample '" + rec.id + "' lacks a usable type label");
    }
    fwd.m_awn = awareness(
        tape, one_hot(static_cast<std::size_t>(rec.qtype), dims.num_types), params.prior);
  }

  Tensor f_v = load_visual(store, rec.feature, dims.regions, dims.region_width);
  std::vector<Tensor> logit_cols;
  logit_cols.reserve(params.hyps.size());
  fwd.hyps.reserve(params.hyps.size());
  for (const HypothesisSpec& hyp : params.hyps) {
    HypothesisOutput out = hypothesis_forward(tape, hyp, f_v, f_q, fwd.f_qt, opt.fusion);
    logit_cols.push_back(out.logits);
    fwd.hyps.push_back(std::move(out));
  }
  fwd.logits_aj = stack_cols(tape, logit_cols);

  switch (opt.interaction) {
    case InteractionMode::Learned: {
      Tensor s = mixing_table(tape, params.prior_t, params.interaction.w_mil,
                              opt.interaction_softmax);
      fwd.mixed = mix_hypotheses(tape, s, fwd.logits_aj);
      break;
    }
    case InteractionMode::Averaging:
      fwd.mixed = average_hypotheses(tape, fwd.logits_aj);
      break;
    case InteractionMode::Single:
      if (params.hyps.size() != 1) {
        throw ValidationError("interaction mode 'single' needs exactly one hypothesis, got " +
                              std::to_string(params.hyps.size()));
      }
      fwd.mixed = fwd.hyps[0].logits;  // untouched pass-through
      break;
  }

  // Prediction scores are plain numbers; no tape nodes.
  const auto& rho = fwd.mixed.values();
  const auto& awn = fwd.m_awn.values();
  bool weight_scores = opt.prior_on && opt.inference_weighting;
  fwd.scores.resize(dims.num_answers);
  for (std::size_t a = 0; a < dims.num_answers; ++a) {
    double s = 1.0 / (1.0 + std::exp(-rho[a]));
    fwd.scores[a] = weight_scores ? awn[a] * s : s;
  }
  return fwd;
}

SampleLossTerms sample_losses(Tape& tape, const SampleForward& fwd, const SampleRecord& rec,
                              std::size_t num_answers, const ModelOptions& opt) {
  Tensor y = build_soft_target(rec, num_answers);
  SampleLossTerms terms;
  // Each hypothesis is scored against the raw targets; the awareness
  // weighting applies only to the combined answer loss, so switching the
  // prior off changes exactly one term.
  terms.hyp.reserve(fwd.hyps.size());
  for (const HypothesisOutput& hyp : fwd.hyps) {
    terms.hyp.push_back(soft_bce(tape, y, hyp.logits));
  }
  if (opt.prior_on) {
    terms.vqa = soft_bce(tape, weight_by_awareness(tape, fwd.m_awn, y),
                         weight_by_awareness(tape, fwd.m_awn, fwd.mixed));
  } else {
    terms.vqa = soft_bce(tape, y, fwd.mixed);
  }
  if (rec.qtype < 0) throw ValidationError("sample '" + rec.id + "' lacks a type label");
  terms.qt = type_nll(tape, fwd.h, static_cast<std::size_t>(rec.qtype));
  return terms;
}

}  // namespace milqt
