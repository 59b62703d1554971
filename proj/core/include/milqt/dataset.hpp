#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "milqt/tensor.hpp"

namespace milqt {

// Question-token vocabulary. Index 0 is the padding token, index 1 the
// out-of-vocabulary token; both are always present.
struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  std::vector<std::string> tokens;
  std::unordered_map<std::string, int> index;

  static Vocabulary with_specials();
  int add(const std::string& token);
  int lookup(const std::string& token) const;  // kUnk when absent
  std::size_t size() const { return tokens.size(); }
  std::string digest() const;
};

// Answer names; line order in the sidecar file defines answer indices.
struct AnswerVocab {
  std::vector<std::string> names;
  std::unordered_map<std::string, int> index;

  int add(const std::string& name);
  int lookup(const std::string& name) const;  // -1 when absent
  std::size_t size() const { return names.size(); }
  std::string digest() const;
};

// Where a sample's K x D_v visual features come from: either a row (block
// index) of a feature file, or a tensor carried inline by the record.
struct FeatureRef {
  std::string path;  // relative to the dataset directory
  int row = -1;
  Tensor inline_features;  // defined() when the record is self-contained
  bool is_inline() const { return inline_features.defined(); }
};

struct SampleRecord {
  std::string id;
  std::string question_text;
  std::vector<int> tokens;  // padded to the bundle's max_q_len
  int qtype = -1;
  std::vector<std::pair<int, double>> answer_scores;  // (answer index, score)
  FeatureRef feature;
};

struct DatasetBundle {
  std::vector<SampleRecord> samples;
  Vocabulary vocab;
  AnswerVocab answers;
  std::vector<std::string> qtype_names;  // sorted; defines qtype indices
  std::string split;
  std::size_t max_q_len = 12;
  std::filesystem::path base_dir;

  std::size_t num_types() const { return qtype_names.size(); }
  std::size_t num_answers() const { return answers.size(); }
  // Sample count per qtype index.
  std::vector<std::size_t> type_histogram() const;
  void validate() const;
};

// Lowercase, strip punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize(std::string_view text);

// Tokenize, map through the vocabulary (unknown -> <unk>), trim to
// max_q_len, then right-pad with <pad>.
std::vector<int> tokenize_and_pad(std::string_view text, const Vocabulary& vocab,
                                  std::size_t max_q_len);

// Dense soft target vector of length num_answers from a record's scores.
Tensor build_soft_target(const SampleRecord& record, std::size_t num_answers);

// Loads records.tsv plus the vocab.txt / answers.txt sidecars from a dataset
// directory (or from the directory containing the given records file).
DatasetBundle load_dataset(const std::filesystem::path& path, std::size_t max_q_len = 12);

// Writes records.tsv, vocab.txt and answers.txt. With externalize_features,
// inline feature tensors are moved to features.txt and records point there.
void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir,
                   bool externalize_features = false);

// Parses feature files (blank-line separated tensor blocks) on first use and
// caches them. Lookup failures name the file and block. Cold lookups mutate
// the cache, so concurrent readers must warm every path they will touch
// first; cache hits are safe to share.
class FeatureStore {
 public:
  explicit FeatureStore(std::filesystem::path base_dir) : base_dir_(std::move(base_dir)) {}
  const Tensor& block(const std::string& rel_path, int row) const;

 private:
  std::filesystem::path base_dir_;
  mutable std::map<std::string, std::vector<Tensor>> cache_;
};

}  // namespace milqt
