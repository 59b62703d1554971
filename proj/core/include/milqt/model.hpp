#pragma once

// Full per-sample pipeline: embed + GRU encode the question, classify its
// type, attend the visual regions once per hypothesis, reconcile the
// per-hypothesis answer logits through the type/answer co-occurrence
// matrix, and weight answer targets/logits/scores by the type-awareness
// vector m_awn = h^T m.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "milqt/dataset.hpp"
#include "milqt/encoders.hpp"
#include "milqt/hypotheses.hpp"
#include "milqt/interaction.hpp"
#include "milqt/losses.hpp"
#include "milqt/prior.hpp"

namespace milqt {

struct ModelDims {
  std::size_t vocab = 0;         // token vocabulary size, incl. specials
  std::size_t embed = 32;        // token embedding width
  std::size_t hidden = 48;       // question feature width (GRU state)
  std::size_t fused = 48;        // fused / type feature width
  std::size_t regions = 4;       // visual regions per sample
  std::size_t region_width = 8;  // feature width per region
  std::size_t num_types = 0;
  std::size_t num_answers = 0;
  std::size_t att_hidden = 48;
  std::size_t lowrank = 16;
  std::size_t stacked_hidden = 48;

  HypothesisSizes hyp_sizes() const;
  void validate() const;
};

// What the awareness vector is computed from.
//   predicted:   m_awn = h^T m with the classifier's posterior (default)
//   groundtruth: one-hot at the sample's true type label
enum class HMode { Predicted, Groundtruth };
HMode h_mode_from(std::string_view name);
std::string h_mode_name(HMode mode);

// How the per-hypothesis logits become the final logit vector. `single`
// demands exactly one hypothesis and passes its logits through untouched.
enum class InteractionMode { Learned, Averaging, Single };
InteractionMode interaction_from(std::string_view name);
std::string interaction_name(InteractionMode mode);

struct ModelOptions {
  bool prior_on = true;          // awareness weighting of the combined loss
  bool inference_weighting = true;  // awareness weighting of prediction scores
  bool stop_gradient_h = false;  // detach h and f_qt from the answer branch
  HMode h_mode = HMode::Predicted;
  FusionOp fusion = FusionOp::EWM;
  InteractionMode interaction = InteractionMode::Learned;
  bool interaction_softmax = false;  // row-softmax the mixing table
};

// "topdown,bilinear_lowrank,stacked2" -> kinds; duplicates are allowed.
std::vector<HypKind> parse_kinds(std::string_view csv);
std::string kinds_csv(std::span<const HypKind> kinds);

struct ModelParams {
  ModelDims dims;
  std::vector<HypKind> kinds;
  Tensor embed;  // [V x D_w]
  GruParams gru;
  QTypeHead qhead;
  std::vector<HypothesisSpec> hyps;
  InteractionWeights interaction;
  PriorMatrix prior;  // frozen statistic
  Tensor prior_t;     // cached [A x P] transpose

  static ModelParams init(const ModelDims& dims, std::span<const HypKind> kinds,
                          PriorMatrix prior, Rng& rng);

  // Every trainable tensor, in a fixed documented order, named for
  // checkpoints and optimizer state.
  std::vector<std::pair<std::string, Tensor*>> named_params();

  void set_prior(PriorMatrix prior);
  std::size_t num_hyps() const { return hyps.size(); }
  // Unique column labels like "h0_topdown".
  std::vector<std::string> hyp_names() const;
};

struct SampleForward {
  Tensor h;      // [P] type posterior (never detached; feeds the type loss)
  Tensor f_qt;   // [D_f] type feature as used by the answer branch
  Tensor m_awn;  // [A] awareness vector actually used (one-hot^T m under
                 // groundtruth typing); always populated for inspection
  std::vector<HypothesisOutput> hyps;
  Tensor logits_aj;  // [A x J]
  Tensor mixed;      // [A] reconciled logits
  std::vector<double> scores;  // prediction scores: sigmoid(mixed), awareness-
                               // weighted when prior_on && inference_weighting

  int predicted_answer() const;        // argmax of scores, lowest index wins
  std::size_t predicted_type() const;  // argmax of h
};

SampleForward model_forward(Tape& tape, const ModelParams& params, const SampleRecord& rec,
                            const FeatureStore& store, const ModelOptions& opt);

// Per-sample loss terms of the multi-task objective. The type posterior is
// taken from fwd.h; answer targets come from the record's score list.
SampleLossTerms sample_losses(Tape& tape, const SampleForward& fwd, const SampleRecord& rec,
                              std::size_t num_answers, const ModelOptions& opt);

}  // namespace milqt
