#pragma once

#include <cstdint>
#include <vector>

#include "milqt/dataset.hpp"

namespace milqt {

// How a question type's visual evidence is planted.
//  Indicator       one signature column carries +magnitude; a plain linear
//                  readout of the signal region recovers the slot.
//  SignedMagnitude the signature column carries +-magnitude with a random
//                  sign, so the slot is only recoverable through a
//                  magnitude (nonlinear) readout; linear scorers average
//                  the two signs away.
enum class SignalKind { Indicator, SignedMagnitude };

struct SynthRule {
  double noise = 0.05;       // uniform(-noise, noise) background
  double magnitude = 1.0;    // planted signature strength
  bool overlap = false;      // answer blocks share answers across types
  bool beacon = true;        // last region is a fixed landmark pattern
  std::vector<SignalKind> signals;  // per type; empty means all Indicator
  // First feature column used by each signal kind. Keeping the ranges
  // disjoint lets different mechanisms own different evidence channels.
  std::size_t indicator_col = 0;
  std::size_t magnitude_col = 0;
  // With region_coded set, SignedMagnitude signatures move from a
  // slot-indexed column in a random region to a FIXED column
  // (magnitude_col) in region == slot, and every signal region r carries a
  // constant 1 in its own marker column (marker_col + r). The slot then
  // lives in WHICH region holds the signature: an attention that responds
  // to the signature's magnitude parks on that region and the pooled
  // marker columns expose the choice linearly, while a sign-sensitive
  // attention is repelled by half the samples and cannot recover the slot
  // from the features it pools. Indicator signatures are unaffected.
  bool region_coded = false;
  std::size_t marker_col = 0;  // must sit right of the signature columns
};

// Answers a question type can take. Without overlap the blocks partition
// [0, A) contiguously; with overlap each block has A/P + 1 answers and
// wraps, so neighbouring types share one answer.
std::vector<int> synth_answer_block(std::size_t p, std::size_t num_types,
                                    std::size_t num_answers, bool overlap);
std::size_t synth_slot_count(std::size_t p, std::size_t num_types, std::size_t num_answers,
                             bool overlap);
// The generator's rule table: (qtype, slot) -> answer index.
int synth_answer(std::size_t p, std::size_t slot, std::size_t num_types,
                 std::size_t num_answers, bool overlap);

// Deterministic synthetic bundle. Each sample draws a qtype and a slot; the
// qtype fixes the answer block, the slot picks the answer inside it. The
// question is a templated token sequence whose keyword identifies the qtype;
// the slot is planted as a signature column in one visual region. Features
// are carried inline so the bundle is self-contained.
DatasetBundle gen_synthetic(std::uint64_t seed, std::size_t num_questions,
                            std::size_t num_types, std::size_t num_answers,
                            std::size_t num_regions, std::size_t region_width,
                            const SynthRule& rule = {});

}  // namespace milqt
