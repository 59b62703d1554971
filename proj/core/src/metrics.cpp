#include "milqt/metrics.hpp"

#include <algorithm>

#include "milqt/error.hpp"
#include "milqt/util.hpp"

namespace milqt {

double answer_credit(const SampleRecord& rec, int predicted) {
  for (const auto& [idx, score] : rec.answer_scores) {
    if (idx == predicted) return std::min(score, 1.0);
  }
  return 0.0;
}

MetricsAccum::MetricsAccum(std::vector<std::string> qtype_names)
    : names_(std::move(qtype_names)), stats_(names_.size()) {
  if (names_.empty()) throw ValidationError("metrics need at least one question type");
}

void MetricsAccum::add(const SampleRecord& rec, int predicted_answer,
                       std::size_t predicted_type) {
  if (rec.qtype < 0 || static_cast<std::size_t>(rec.qtype) >= stats_.size()) {
    throw ValidationError("sample '" + rec.id + "' has type index " +
                          std::to_string(rec.qtype) + " outside the metrics table");
  }
  TypeStat& st = stats_[static_cast<std::size_t>(rec.qtype)];
  double credit = answer_credit(rec, predicted_answer);
  st.count += 1;
  st.credit += credit;
  credit_total_ += credit;
  if (predicted_type == static_cast<std::size_t>(rec.qtype)) {
    st.type_hits += 1;
    type_hits_ += 1;
  }
  n_ += 1;
}

MetricsReport MetricsAccum::finalize() const {
  MetricsReport rep;
  rep.qtype_names = names_;
  rep.per_type = stats_;
  rep.num_samples = n_;
  if (n_ > 0) {
    rep.answer_accuracy = credit_total_ / static_cast<double>(n_);
    rep.type_accuracy = static_cast<double>(type_hits_) / static_cast<double>(n_);
  }
  std::size_t present = 0;
  double acc_sum = 0.0;
  double inv_sum = 0.0;
  bool any_zero = false;
  for (const TypeStat& st : stats_) {
    if (st.count == 0) continue;
    ++present;
    double acc = st.answer_acc();
    acc_sum += acc;
    if (acc <= 0.0) {
      any_zero = true;
    } else {
      inv_sum += 1.0 / acc;
    }
  }
  if (present > 0) {
    rep.mpt_arithmetic = acc_sum / static_cast<double>(present);
    rep.mpt_harmonic = any_zero ? 0.0 : static_cast<double>(present) / inv_sum;
  }
  return rep;
}

std::string MetricsReport::to_text() const {
  std::string out;
  out += "samples: " + std::to_string(num_samples) + "\n";
  out += "answer accuracy: " + fmt_double(answer_accuracy) + "\n";
  out += "mean per type (arithmetic): " + fmt_double(mpt_arithmetic) + "\n";
  out += "mean per type (harmonic): " + fmt_double(mpt_harmonic) + "\n";
  out += "type accuracy: " + fmt_double(type_accuracy) + "\n";
  out += "per type:\n";
  for (std::size_t p = 0; p < qtype_names.size(); ++p) {
    const TypeStat& st = per_type[p];
    out += "  " + qtype_names[p] + " count=" + std::to_string(st.count) +
           " answer_acc=" + fmt_double(st.answer_acc()) +
           " type_acc=" + fmt_double(st.type_acc()) + "\n";
  }
  return out;
}

std::string MetricsReport::to_csv() const {
  std::string out = "name,count,answer_accuracy,type_accuracy\n";
  out += "overall," + std::to_string(num_samples) + "," + fmt_double(answer_accuracy) + "," +
         fmt_double(type_accuracy) + "\n";
  for (std::size_t p = 0; p < qtype_names.size(); ++p) {
    const TypeStat& st = per_type[p];
    out += qtype_names[p] + "," + std::to_string(st.count) + "," +
           fmt_double(st.answer_acc()) + "," + fmt_double(st.type_acc()) + "\n";
  }
  out += "mpt_arithmetic,," + fmt_double(mpt_arithmetic) + ",\n";
  out += "mpt_harmonic,," + fmt_double(mpt_harmonic) + ",\n";
  return out;
}

}  // namespace milqt
