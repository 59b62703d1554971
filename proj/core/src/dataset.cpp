#include "milqt/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

namespace {

constexpr const char* kRecordsFile = "records.tsv";
constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kAnswersFile = "answers.txt";
constexpr const char* kFeaturesFile = "features.txt";

std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

}  // namespace

Vocabulary Vocabulary::with_specials() {
  Vocabulary v;
  v.add(kPadToken);
  v.add(kUnkToken);
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = index.find(token);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(tokens.size());
  tokens.push_back(token);
  index.emplace(token, id);
  return id;
}

int Vocabulary::lookup(const std::string& token) const {
  auto it = index.find(token);
  return it == index.end() ? kUnk : it->second;
}

std::string Vocabulary::digest() const {
  std::string joined;
  for (const auto& t : tokens) {
    joined += t;
    joined += '\n';
  }
  return fnv1a_hex(joined);
}

int AnswerVocab::add(const std::string& name) {
  auto it = index.find(name);
  if (it != index.end()) return it->second;
  int id = static_cast<int>(names.size());
  names.push_back(name);
  index.emplace(name, id);
  return id;
}

int AnswerVocab::lookup(const std::string& name) const {
  auto it = index.find(name);
  return it == index.end() ? -1 : it->second;
}

std::string AnswerVocab::digest() const {
  std::string joined;
  for (const auto& n : names) {
    joined += n;
    joined += '\n';
  }
  return fnv1a_hex(joined);
}

std::vector<std::size_t> DatasetBundle::type_histogram() const {
  std::vector<std::size_t> hist(num_types(), 0);
  for (const auto& s : samples) hist[static_cast<std::size_t>(s.qtype)] += 1;
  return hist;
}

void DatasetBundle::validate() const {
  if (samples.empty()) throw ValidationError("dataset has no samples");
  if (qtype_names.empty()) throw ValidationError("dataset has no question types");
  if (answers.size() == 0) throw ValidationError("dataset has no answer vocabulary");
  for (const auto& s : samples) {
    if (s.qtype < 0 || static_cast<std::size_t>(s.qtype) >= num_types()) {
      throw ValidationError("sample " + s.id + ": qtype index out of range");
    }
    if (s.tokens.size() != max_q_len) {
      throw ValidationError("sample " + s.id + ": token sequence not padded to " +
                            std::to_string(max_q_len));
    }
    if (s.answer_scores.empty()) {
      throw ValidationError("sample " + s.id + ": no answer scores");
    }
    for (const auto& [idx, score] : s.answer_scores) {
      if (idx < 0 || static_cast<std::size_t>(idx) >= num_answers()) {
        throw ValidationError("sample " + s.id + ": answer index out of range");
      }
      if (score < 0.0 || score > 1.0) {
        throw ValidationError("sample " + s.id + ": answer score outside [0, 1]");
      }
    }
    if (!s.feature.is_inline() && s.feature.path.empty()) {
      throw ValidationError("sample " + s.id + ": no feature reference");
    }
  }
}

std::vector<std::string> tokenize(std::string_view text) {
  std::string canon;
  canon.reserve(text.size());
  for (char c : text) {
    unsigned char uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      canon += static_cast<char>(std::tolower(uc));
    } else {
      canon += ' ';
    }
  }
  return split_ws(canon);
}

std::vector<int> tokenize_and_pad(std::string_view text, const Vocabulary& vocab,
                                  std::size_t max_q_len) {
  std::vector<std::string> words = tokenize(text);
  std::vector<int> out;
  out.reserve(max_q_len);
  for (std::size_t i = 0; i < words.size() && i < max_q_len; ++i) {
    out.push_back(vocab.lookup(words[i]));
  }
  out.resize(max_q_len, Vocabulary::kPad);
  return out;
}

Tensor build_soft_target(const SampleRecord& record, std::size_t num_answers) {
  if (record.answer_scores.empty()) {
    throw ValidationError("sample " + record.id + ": no answer scores");
  }
  std::vector<double> y(num_answers, 0.0);
  std::vector<char> seen(num_answers, 0);
  for (const auto& [idx, score] : record.answer_scores) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= num_answers) {
      throw ValidationError("sample " + record.id + ": answer index out of range");
    }
    if (seen[static_cast<std::size_t>(idx)]) {
      throw ValidationError("sample " + record.id + ": duplicate answer index " +
                            std::to_string(idx));
    }
    seen[static_cast<std::size_t>(idx)] = 1;
    y[static_cast<std::size_t>(idx)] = score;
  }
  return Tensor({num_answers}, std::move(y));
}

DatasetBundle load_dataset(const std::filesystem::path& path, std::size_t max_q_len) {
  std::filesystem::path dir = std::filesystem::is_directory(path) ? path : path.parent_path();
  DatasetBundle bundle;
  bundle.base_dir = dir;
  bundle.split = dir.filename().string();
  bundle.max_q_len = max_q_len;

  // Vocabulary sidecar: one token per line, line number is the index.
  {
    std::vector<std::string> lines = nonempty_lines(read_file(dir / kVocabFile));
    if (lines.size() < 2 || lines[0] != Vocabulary::kPadToken ||
        lines[1] != Vocabulary::kUnkToken) {
      throw ParseError(std::string(kVocabFile) + ": first lines must be " +
                       Vocabulary::kPadToken + " and " + Vocabulary::kUnkToken);
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string& tok = lines[i];
      if (bundle.vocab.index.count(tok)) {
        throw ParseError(std::string(kVocabFile) + ": duplicate token '" + tok + "'", i + 1);
      }
      bundle.vocab.add(tok);
    }
  }

  // Answer sidecar.
  {
    std::vector<std::string> lines = nonempty_lines(read_file(dir / kAnswersFile));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string& name = lines[i];
      if (bundle.answers.index.count(name)) {
        throw ParseError(std::string(kAnswersFile) + ": duplicate answer '" + name + "'", i + 1);
      }
      bundle.answers.add(name);
    }
    if (bundle.answers.size() == 0) throw ParseError(std::string(kAnswersFile) + ": empty");
  }

  // Records: tab-separated, one sample per line. Fields: id, question text,
  // qtype name, answer=score list, feature ref, optional inline features.
  std::vector<std::string> lines = nonempty_lines(read_file(dir / kRecordsFile));
  if (lines.empty()) throw ValidationError("dataset has no samples");

  struct RawRecord {
    std::vector<std::string> fields;
    std::size_t line;
  };
  std::vector<RawRecord> raw;
  std::set<std::string> type_set;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::vector<std::string> fields = split(lines[i], '\t');
    if (fields.size() < 5 || fields.size() > 6) {
      throw ParseError("record needs 5 or 6 tab-separated fields, got " +
                       std::to_string(fields.size()),
                       i + 1);
    }
    if (fields[0].empty()) throw ParseError("record has an empty id", i + 1);
    type_set.insert(fields[2]);
    raw.push_back({std::move(fields), i + 1});
  }

  // Qtype indices follow the lexicographic order of the distinct names, so
  // train and eval splits generated together agree on indices.
  bundle.qtype_names.assign(type_set.begin(), type_set.end());
  std::map<std::string, int> type_index;
  for (std::size_t i = 0; i < bundle.qtype_names.size(); ++i) {
    type_index[bundle.qtype_names[i]] = static_cast<int>(i);
  }

  for (const auto& rec : raw) {
    SampleRecord s;
    s.id = rec.fields[0];
    s.question_text = rec.fields[1];
    s.tokens = tokenize_and_pad(s.question_text, bundle.vocab, max_q_len);
    s.qtype = type_index.at(rec.fields[2]);

    for (const auto& part : split(rec.fields[3], ';')) {
      std::size_t eq = part.rfind('=');
      if (eq == std::string::npos) {
        throw ParseError("answer entry '" + part + "' is not name=score", rec.line);
      }
      std::string name = part.substr(0, eq);
      int idx = bundle.answers.lookup(name);
      if (idx < 0) throw ValidationError("unknown answer '" + name + "' in record " + s.id);
      double score;
      try {
        score = parse_double(part.substr(eq + 1));
      } catch (const ParseError&) {
        throw ParseError("bad answer score in '" + part + "'", rec.line);
      }
      if (score < 0.0 || score > 1.0) {
        throw ValidationError("answer score outside [0, 1] in record " + s.id);
      }
      s.answer_scores.emplace_back(idx, score);
    }

    const std::string& ref = rec.fields[4];
    if (ref == "inline") {
      if (rec.fields.size() != 6) {
        throw ParseError("inline feature record needs a sixth field", rec.line);
      }
      std::vector<std::string> toks = split_ws(rec.fields[5]);
      if (toks.size() < 2) throw ParseError("inline features need K and D_v", rec.line);
      std::size_t k = parse_size(toks[0]), dv = parse_size(toks[1]);
      if (toks.size() != 2 + k * dv) {
        throw ParseError("inline features need " + std::to_string(k * dv) + " values", rec.line);
      }
      std::vector<double> vals;
      vals.reserve(k * dv);
      for (std::size_t i = 2; i < toks.size(); ++i) vals.push_back(parse_double(toks[i]));
      s.feature.inline_features = Tensor({k, dv}, std::move(vals));
    } else {
      if (rec.fields.size() != 5) {
        throw ParseError("only inline feature records may have a sixth field", rec.line);
      }
      std::size_t hash = ref.rfind('#');
      if (hash == std::string::npos || hash == 0 || hash + 1 == ref.size()) {
        throw ParseError("feature ref '" + ref + "' is not path#row", rec.line);
      }
      s.feature.path = ref.substr(0, hash);
      s.feature.row = static_cast<int>(parse_size(ref.substr(hash + 1)));
    }
    bundle.samples.push_back(std::move(s));
  }

  bundle.validate();
  return bundle;
}

void write_dataset(const DatasetBundle& bundle, const std::filesystem::path& dir,
                   bool externalize_features) {
  std::filesystem::create_directories(dir);

  std::vector<Tensor> external_blocks;
  std::string records;
  for (const auto& s : bundle.samples) {
    records += s.id;
    records += '\t';
    records += s.question_text;
    records += '\t';
    records += bundle.qtype_names.at(static_cast<std::size_t>(s.qtype));
    records += '\t';
    for (std::size_t i = 0; i < s.answer_scores.size(); ++i) {
      if (i) records += ';';
      records += bundle.answers.names.at(static_cast<std::size_t>(s.answer_scores[i].first));
      records += '=';
      records += fmt_double(s.answer_scores[i].second);
    }
    records += '\t';
    if (s.feature.is_inline() && externalize_features) {
      records += kFeaturesFile;
      records += '#';
      records += std::to_string(external_blocks.size());
      external_blocks.push_back(s.feature.inline_features);
    } else if (s.feature.is_inline()) {
      const Tensor& f = s.feature.inline_features;
      records += "inline\t";
      records += std::to_string(f.extent(0));
      records += ' ';
      records += std::to_string(f.extent(1));
      for (double v : f.values()) {
        records += ' ';
        records += fmt_double(v);
      }
    } else {
      records += s.feature.path;
      records += '#';
      records += std::to_string(s.feature.row);
    }
    records += '\n';
  }
  write_file(dir / kRecordsFile, records);

  std::string vocab_text;
  for (const auto& t : bundle.vocab.tokens) {
    vocab_text += t;
    vocab_text += '\n';
  }
  write_file(dir / kVocabFile, vocab_text);

  std::string answers_text;
  for (const auto& n : bundle.answers.names) {
    answers_text += n;
    answers_text += '\n';
  }
  write_file(dir / kAnswersFile, answers_text);

  if (!external_blocks.empty()) {
    write_file(dir / kFeaturesFile, tensor_blocks_to_text(external_blocks));
  }
}

const Tensor& FeatureStore::block(const std::string& rel_path, int row) const {
  auto it = cache_.find(rel_path);
  if (it == cache_.end()) {
    std::filesystem::path full = base_dir_.empty() ? std::filesystem::path(rel_path)
                                                   : base_dir_ / rel_path;
    std::string text;
    try {
      text = read_file(full);
    } catch (const IoError&) {
      throw IoError("feature file not found: " + full.string());
    }
    it = cache_.emplace(rel_path, tensor_blocks_from_text(text)).first;
  }
  const auto& blocks = it->second;
  if (row < 0 || static_cast<std::size_t>(row) >= blocks.size()) {
    throw IoError("missing feature block " + std::to_string(row) + " in " + rel_path +
                  " (" + std::to_string(blocks.size()) + " blocks)");
  }
  return blocks[static_cast<std::size_t>(row)];
}

}  // namespace milqt
