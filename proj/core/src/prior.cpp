#include "milqt/prior.hpp"

#include <cmath>
#include <cstdint>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

namespace {

// Normalizes one column of counts in place. Entries are count/total, except
// that the last row holding a nonzero count closes the column: it stores
// 1 - (sum of the other entries). Zero-count rows store an exact 0.0, so a
// left-to-right walk over the column reproduces exactly 1.0, and the closing
// entry stays positive because the others total at most (total-1)/total.
// Caller guarantees total >= 1, i.e. at least one nonzero count.
void normalize_column(std::vector<double>& m, std::size_t p_count, std::size_t a_count,
                      std::size_t a, const std::vector<std::int64_t>& counts,
                      std::int64_t total) {
  std::size_t closer = 0;
  for (std::size_t p = p_count; p-- > 0;) {
    if (counts[p * a_count + a] != 0) {
      closer = p;
      break;
    }
  }
  double partial = 0.0;
  for (std::size_t p = 0; p < p_count; ++p) {
    if (p == closer) continue;
    double v = static_cast<double>(counts[p * a_count + a]) / static_cast<double>(total);
    m[p * a_count + a] = v;
    partial += v;
  }
  m[closer * a_count + a] = 1.0 - partial;
}

}  // namespace

Tensor PriorMatrix::transposed() const {
  std::size_t p_count = num_types(), a_count = num_answers();
  std::vector<double> t(a_count * p_count);
  const auto& v = m.values();
  for (std::size_t p = 0; p < p_count; ++p) {
    for (std::size_t a = 0; a < a_count; ++a) t[a * p_count + p] = v[p * a_count + a];
  }
  return Tensor({a_count, p_count}, std::move(t));
}

PriorMatrix PriorMatrix::uniform(std::vector<std::string> qtype_names,
                                 std::vector<std::string> answer_names) {
  std::size_t p_count = qtype_names.size(), a_count = answer_names.size();
  if (p_count == 0 || a_count == 0) throw ValidationError("uniform prior needs names");
  std::vector<double> m(p_count * a_count);
  std::vector<std::int64_t> counts(p_count * a_count, 1);
  for (std::size_t a = 0; a < a_count; ++a) {
    normalize_column(m, p_count, a_count, a, counts, static_cast<std::int64_t>(p_count));
  }
  PriorMatrix out;
  out.m = Tensor({p_count, a_count}, std::move(m));
  out.qtype_names = std::move(qtype_names);
  out.answer_names = std::move(answer_names);
  out.fallback_mask.assign(a_count, false);
  return out;
}

PriorMatrix compute_prior(const DatasetBundle& bundle) {
  if (bundle.samples.empty()) throw ValidationError("compute_prior: empty bundle");
  std::size_t p_count = bundle.num_types(), a_count = bundle.num_answers();

  std::vector<std::int64_t> counts(p_count * a_count, 0);
  for (const auto& s : bundle.samples) {
    if (s.answer_scores.empty()) {
      throw ValidationError("compute_prior: sample " + s.id + " has no answers");
    }
    // Counted label: best-scored answer, lowest index on ties.
    int best = s.answer_scores.front().first;
    double best_score = s.answer_scores.front().second;
    for (const auto& [idx, score] : s.answer_scores) {
      if (score > best_score || (score == best_score && idx < best)) {
        best = idx;
        best_score = score;
      }
    }
    counts[static_cast<std::size_t>(s.qtype) * a_count + static_cast<std::size_t>(best)] += 1;
  }

  std::vector<double> m(p_count * a_count, 0.0);
  PriorMatrix out;
  out.fallback_mask.assign(a_count, false);
  std::vector<std::int64_t> uniform_counts(p_count * a_count, 1);
  for (std::size_t a = 0; a < a_count; ++a) {
    std::int64_t total = 0;
    for (std::size_t p = 0; p < p_count; ++p) total += counts[p * a_count + a];
    if (total == 0) {
      // Unseen answer: uniform column, flagged.
      normalize_column(m, p_count, a_count, a, uniform_counts,
                       static_cast<std::int64_t>(p_count));
      out.fallback_mask[a] = true;
    } else {
      normalize_column(m, p_count, a_count, a, counts, total);
    }
  }

  out.m = Tensor({p_count, a_count}, std::move(m));
  out.qtype_names = bundle.qtype_names;
  out.answer_names = bundle.answers.names;
  return out;
}

Tensor awareness(Tape& tape, const Tensor& h, const PriorMatrix& prior) {
  std::size_t p_count = prior.num_types();
  if (h.size() != p_count) {
    throw ShapeError("awareness: h has " + std::to_string(h.size()) + " entries, prior has " +
                     std::to_string(p_count) + " types");
  }
  double sum = 0.0;
  for (double v : h.values()) {
    if (v < -1e-9) throw ContractError("awareness: h has a negative entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ContractError("awareness: h sums to " + fmt_double(sum) + ", not 1 within 1e-6");
  }
  Tensor hr = h.rank() == 2 ? reshape(tape, h, {1, p_count}) : as_row(tape, h);
  return squeeze(tape, matmul(tape, hr, prior.m));
}

std::string prior_to_csv(const PriorMatrix& prior) {
  std::size_t p_count = prior.num_types(), a_count = prior.num_answers();
  std::string out = "qtype\\answer";
  for (const auto& name : prior.answer_names) {
    out += ',';
    out += name;
  }
  out += '\n';
  const auto& v = prior.m.values();
  for (std::size_t p = 0; p < p_count; ++p) {
    out += prior.qtype_names[p];
    for (std::size_t a = 0; a < a_count; ++a) {
      out += ',';
      out += fmt_double(v[p * a_count + a]);
    }
    out += '\n';
  }
  out += "# fallback:";
  for (std::size_t a = 0; a < a_count; ++a) {
    if (prior.fallback_mask[a]) {
      out += ' ';
      out += prior.answer_names[a];
    }
  }
  out += '\n';
  return out;
}

PriorMatrix prior_from_csv(std::string_view text) {
  std::vector<std::string> lines = split(text, '\n');
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() < 3) throw ParseError("prior csv needs a header, rows and a fallback line");

  std::vector<std::string> header = split(lines[0], ',');
  if (header.empty() || header[0] != "qtype\\answer") {
    throw ParseError("prior csv header must start with qtype\\answer", 1);
  }
  PriorMatrix out;
  out.answer_names.assign(header.begin() + 1, header.end());
  std::size_t a_count = out.answer_names.size();
  if (a_count == 0) throw ParseError("prior csv has no answer columns", 1);

  std::string fallback_line;
  std::vector<double> values;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (line.rfind("# fallback:", 0) == 0) {
      if (i + 1 != lines.size()) throw ParseError("fallback comment must be last", i + 1);
      fallback_line = std::string(line.substr(11));
      break;
    }
    std::vector<std::string> cells = split(line, ',');
    if (cells.size() != a_count + 1) {
      throw ParseError("prior row needs " + std::to_string(a_count + 1) + " cells", i + 1);
    }
    out.qtype_names.push_back(cells[0]);
    for (std::size_t a = 0; a < a_count; ++a) values.push_back(parse_double(cells[a + 1]));
  }
  if (fallback_line.empty() && lines.back().rfind("# fallback:", 0) != 0) {
    throw ParseError("prior csv is missing the fallback comment line");
  }
  std::size_t p_count = out.qtype_names.size();
  if (p_count == 0) throw ParseError("prior csv has no type rows");

  out.m = Tensor({p_count, a_count}, std::move(values));
  out.fallback_mask.assign(a_count, false);
  for (const auto& name : split_ws(fallback_line)) {
    bool found = false;
    for (std::size_t a = 0; a < a_count; ++a) {
      if (out.answer_names[a] == name) {
        out.fallback_mask[a] = true;
        found = true;
        break;
      }
    }
    if (!found) throw ParseError("fallback names an unknown answer '" + name + "'");
  }
  return out;
}

void save_prior(const std::filesystem::path& path, const PriorMatrix& prior) {
  write_file(path, prior_to_csv(prior));
}

PriorMatrix load_prior(const std::filesystem::path& path) {
  return prior_from_csv(read_file(path));
}

}  // namespace milqt
