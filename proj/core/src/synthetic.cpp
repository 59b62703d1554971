#include "milqt/synthetic.hpp"

#include <algorithm>
#include <set>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

namespace {

const std::vector<std::string>& type_keywords() {
  static const std::vector<std::string> kw = {
      "color", "count",  "where",   "kind", "shape", "size",
      "time",  "sport",  "animal",  "brand", "mood", "direction"};
  return kw;
}

const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> fill = {
      "what", "is", "the", "in", "this", "picture", "how", "do",
      "you",  "see", "item", "shown", "of", "a", "scene"};
  return fill;
}

std::string pad2(std::size_t v) {
  std::string s = std::to_string(v);
  return s.size() < 2 ? "0" + s : s;
}

std::string keyword_for(std::size_t p) {
  const auto& kw = type_keywords();
  if (p < kw.size()) return kw[p];
  return "topic" + std::to_string(p);
}

}  // namespace

std::vector<int> synth_answer_block(std::size_t p, std::size_t num_types,
                                    std::size_t num_answers, bool overlap) {
  std::size_t base = num_answers / num_types;
  std::vector<int> block;
  if (overlap) {
    std::size_t size = std::min(num_answers, base + 1);
    for (std::size_t s = 0; s < size; ++s) {
      block.push_back(static_cast<int>((p * base + s) % num_answers));
    }
  } else {
    std::size_t rem = num_answers % num_types;
    std::size_t start = p * base + std::min(p, rem);
    std::size_t size = base + (p < rem ? 1 : 0);
    for (std::size_t s = 0; s < size; ++s) block.push_back(static_cast<int>(start + s));
  }
  return block;
}

std::size_t synth_slot_count(std::size_t p, std::size_t num_types, std::size_t num_answers,
                             bool overlap) {
  return synth_answer_block(p, num_types, num_answers, overlap).size();
}

int synth_answer(std::size_t p, std::size_t slot, std::size_t num_types,
                 std::size_t num_answers, bool overlap) {
  std::vector<int> block = synth_answer_block(p, num_types, num_answers, overlap);
  if (slot >= block.size()) throw ContractError("synth_answer: slot out of range");
  return block[slot];
}

DatasetBundle gen_synthetic(std::uint64_t seed, std::size_t num_questions,
                            std::size_t num_types, std::size_t num_answers,
                            std::size_t num_regions, std::size_t region_width,
                            const SynthRule& rule) {
  if (num_questions < 2 || num_types < 2 || num_answers < 2 || num_regions < 2 ||
      region_width < 2) {
    throw ValidationError("gen_synthetic: all extents must be at least 2");
  }
  if (num_answers < num_types) {
    throw ValidationError("gen_synthetic: need at least as many answers as question types");
  }
  if (!rule.signals.empty() && rule.signals.size() != num_types) {
    throw ValidationError("gen_synthetic: signal list must have one entry per question type");
  }

  std::size_t signal_regions = num_regions - (rule.beacon ? 1 : 0);
  if (signal_regions == 0) {
    throw ValidationError("gen_synthetic: no region left for the planted signal");
  }
  std::size_t usable_cols = region_width - (rule.beacon ? 1 : 0);
  std::size_t max_slots = 0;
  for (std::size_t p = 0; p < num_types; ++p) {
    max_slots = std::max(max_slots, synth_slot_count(p, num_types, num_answers, rule.overlap));
  }
  std::size_t col_base = std::max(rule.indicator_col, rule.magnitude_col);
  if (col_base + max_slots > usable_cols) {
    throw ValidationError("gen_synthetic: region width too small for the signature columns");
  }
  if (rule.region_coded) {
    if (max_slots > signal_regions) {
      throw ValidationError("gen_synthetic: region-coded slots need one signal region each");
    }
    if (rule.marker_col < col_base + max_slots) {
      throw ValidationError("gen_synthetic: marker columns overlap the signature columns");
    }
    if (rule.marker_col + signal_regions > usable_cols) {
      throw ValidationError("gen_synthetic: region width too small for the marker columns");
    }
  }

  DatasetBundle bundle;
  bundle.split = "synthetic";
  bundle.max_q_len = 12;

  for (std::size_t p = 0; p < num_types; ++p) bundle.qtype_names.push_back("qt" + pad2(p));
  for (std::size_t a = 0; a < num_answers; ++a) bundle.answers.add("a" + pad2(a));

  // Stable vocabulary: specials plus the full sorted template word list, so
  // the token indices do not depend on which questions are drawn.
  std::set<std::string> words(filler_words().begin(), filler_words().end());
  for (std::size_t p = 0; p < num_types; ++p) words.insert(keyword_for(p));
  bundle.vocab = Vocabulary::with_specials();
  for (const auto& w : words) bundle.vocab.add(w);

  Rng rng(seed);
  const auto& fillers = filler_words();
  for (std::size_t q = 0; q < num_questions; ++q) {
    std::size_t p = rng.uniform_int(num_types);
    std::size_t slots = synth_slot_count(p, num_types, num_answers, rule.overlap);
    std::size_t slot = rng.uniform_int(slots);
    int answer = synth_answer(p, slot, num_types, num_answers, rule.overlap);

    std::size_t len = 4 + rng.uniform_int(6);  // 4..9 words, under the 12 cap
    std::size_t kw_pos = rng.uniform_int(len);
    std::string text;
    for (std::size_t i = 0; i < len; ++i) {
      if (i) text += ' ';
      text += i == kw_pos ? keyword_for(p) : fillers[rng.uniform_int(fillers.size())];
    }

    std::vector<double> feat(num_regions * region_width);
    for (double& v : feat) v = rng.uniform(-rule.noise, rule.noise);
    if (rule.beacon) {
      // Landmark region: clean zeros with a 1 in the last column, so an
      // attention mechanism has a stable place to park.
      std::size_t base = (num_regions - 1) * region_width;
      for (std::size_t c = 0; c < region_width; ++c) feat[base + c] = 0.0;
      feat[base + region_width - 1] = 1.0;
    }
    if (rule.region_coded) {
      // Per-region identity markers; whichever region attention pools
      // from announces itself in the marker columns.
      for (std::size_t r = 0; r < signal_regions; ++r) {
        feat[r * region_width + rule.marker_col + r] = 1.0;
      }
    }
    std::size_t region = rng.uniform_int(signal_regions);
    SignalKind kind = rule.signals.empty() ? SignalKind::Indicator : rule.signals[p];
    std::size_t col = (kind == SignalKind::Indicator ? rule.indicator_col : rule.magnitude_col) +
                      slot;
    double value = rule.magnitude;
    if (kind == SignalKind::SignedMagnitude) {
      value *= rng.pick_sign();
      if (rule.region_coded) {
        region = slot;  // the slot picks the region, the column stays put
        col = rule.magnitude_col;
      }
    }
    feat[region * region_width + col] = value;

    SampleRecord s;
    s.id = "q" + std::string(5 - std::min<std::size_t>(5, std::to_string(q).size()), '0') +
           std::to_string(q);
    s.question_text = text;
    s.tokens = tokenize_and_pad(text, bundle.vocab, bundle.max_q_len);
    s.qtype = static_cast<int>(p);
    s.answer_scores.emplace_back(answer, 1.0);
    s.feature.inline_features = Tensor({num_regions, region_width}, std::move(feat));
    bundle.samples.push_back(std::move(s));
  }

  bundle.validate();
  return bundle;
}

}  // namespace milqt
