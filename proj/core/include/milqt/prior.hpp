#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "milqt/dataset.hpp"
#include "milqt/ops.hpp"
#include "milqt/tape.hpp"
#include "milqt/tensor.hpp"

namespace milqt {

// Column-stochastic qtype/answer co-occurrence matrix [P x A]. Column a is
// the distribution over question types given answer a. Columns for answers
// never seen in the source split fall back to uniform 1/P and are flagged
// in fallback_mask. The matrix is a frozen statistic: nothing backpropagates
// into it.
struct PriorMatrix {
  Tensor m;  // [P x A], constant
  std::vector<std::string> qtype_names;
  std::vector<std::string> answer_names;
  std::vector<bool> fallback_mask;  // one flag per answer column

  std::size_t num_types() const { return m.defined() ? m.extent(0) : 0; }
  std::size_t num_answers() const { return m.defined() ? m.extent(1) : 0; }
  // [A x P] copy, cached on first use by value semantics at call sites.
  Tensor transposed() const;
  static PriorMatrix uniform(std::vector<std::string> qtype_names,
                             std::vector<std::string> answer_names);
};

// Integer co-occurrence counting over the bundle followed by one division
// per entry. A sample's counted answer is its highest-scored one (lowest
// index on ties). In each column the last row with a nonzero count is
// written as 1 minus the sum of the others (zero-count rows store an exact
// 0.0), so a left-to-right column sum is exactly 1.0.
PriorMatrix compute_prior(const DatasetBundle& bundle);

// Awareness vector m_awn = h^T m [A]. h must be a distribution over the P
// types (entries nonnegative, sum within 1e-6 of 1); differentiable in h.
Tensor awareness(Tape& tape, const Tensor& h, const PriorMatrix& prior);

// CSV export/import. Header row is "qtype\answer" plus the answer names;
// one row per type; a trailing comment line lists the fallback columns.
std::string prior_to_csv(const PriorMatrix& prior);
PriorMatrix prior_from_csv(std::string_view text);
void save_prior(const std::filesystem::path& path, const PriorMatrix& prior);
PriorMatrix load_prior(const std::filesystem::path& path);

}  // namespace milqt
