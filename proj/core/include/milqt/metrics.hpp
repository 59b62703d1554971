#pragma once

// Evaluation accounting. Answer accuracy gives graded credit: predicting
// answer a on a sample whose score list assigns a the value s earns
// min(s, 1). Per-type accuracies feed two aggregate views: the arithmetic
// mean over types that appear in the eval set, and the harmonic mean,
// which collapses to 0 as soon as one present type has zero accuracy and
// so rewards models that are not lopsided across question types.

#include <cstddef>
#include <string>
#include <vector>

#include "milqt/dataset.hpp"

namespace milqt {

// Graded credit for predicting answer index `predicted` on this sample.
double answer_credit(const SampleRecord& rec, int predicted);

struct TypeStat {
  std::size_t count = 0;
  double credit = 0.0;        // summed graded credit
  std::size_t type_hits = 0;  // correct type classifications

  double answer_acc() const { return count ? credit / static_cast<double>(count) : 0.0; }
  double type_acc() const {
    return count ? static_cast<double>(type_hits) / static_cast<double>(count) : 0.0;
  }
};

struct MetricsReport {
  std::vector<std::string> qtype_names;
  std::vector<TypeStat> per_type;  // aligned with qtype_names; zero-count kept
  std::size_t num_samples = 0;
  double answer_accuracy = 0.0;
  double mpt_arithmetic = 0.0;  // over types present in the eval set
  double mpt_harmonic = 0.0;    // 0 if any present type scores 0
  double type_accuracy = 0.0;

  std::string to_text() const;
  // Rows: overall, one per type, then the two mean-per-type aggregates.
  // Columns: name,count,answer_accuracy,type_accuracy.
  std::string to_csv() const;
};

// Streaming accumulator; add() once per evaluated sample.
class MetricsAccum {
 public:
  explicit MetricsAccum(std::vector<std::string> qtype_names);

  void add(const SampleRecord& rec, int predicted_answer, std::size_t predicted_type);
  MetricsReport finalize() const;

 private:
  std::vector<std::string> names_;
  std::vector<TypeStat> stats_;
  double credit_total_ = 0.0;
  std::size_t type_hits_ = 0;
  std::size_t n_ = 0;
};

}  // namespace milqt
