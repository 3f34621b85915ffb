#include "neurallog/study.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace neurallog::study {

std::set<std::string, std::less<>> whitespace_vocab(std::span<const RawLogRecord> records) {
  std::set<std::string, std::less<>> vocab;
  for (const auto& r : records) {
    for (auto& w : parsers::split_whitespace(r.content)) vocab.insert(std::move(w));
  }
  return vocab;
}

OovReport oov_stats(std::span<const RawLogRecord> train_records,
                    std::span<const RawLogRecord> test_records,
                    const parsers::ParseResult* test_parse) {
  if (test_records.empty()) throw std::invalid_argument("empty test set");
  const auto train_vocab = whitespace_vocab(train_records);
  auto unseen = [&train_vocab](std::string_view w) { return !train_vocab.contains(w); };

  OovReport report;
  report.train_unique_words = train_vocab.size();
  const auto test_vocab = whitespace_vocab(test_records);
  report.unique_words.denominator = test_vocab.size();
  report.unique_words.numerator =
      static_cast<std::size_t>(std::count_if(test_vocab.begin(), test_vocab.end(), unseen));

  report.messages.denominator = test_records.size();
  for (const auto& r : test_records) {
    const auto words = parsers::split_whitespace(r.content);
    if (std::any_of(words.begin(), words.end(), unseen)) ++report.messages.numerator;
  }

  if (test_parse != nullptr) {
    Ratio t;
    for (const auto& tmpl : test_parse->templates) {
      ++t.denominator;
      const auto kw = tmpl.keywords();
      if (std::any_of(kw.begin(), kw.end(), unseen)) ++t.numerator;
    }
    report.templates = t;
  }
  return report;
}

ExtraEventResult extra_event_rate(const parsers::ParseResult& parsed,
                                  std::span<const parsers::Template> gt_templates) {
  if (gt_templates.empty()) throw std::invalid_argument("ground-truth template list is empty");
  ExtraEventResult out;
  for (const auto& tmpl : parsed.templates) {
    ++out.rate.denominator;
    const auto rendered = parsers::split_whitespace(tmpl.render());
    const auto gt_id = parsers::match_to_ground_truth(rendered, gt_templates);
    const auto gt = std::find_if(gt_templates.begin(), gt_templates.end(),
                                 [gt_id](const parsers::Template& t) { return t.id == gt_id; });
    if (tmpl.keyword_count() > gt->keyword_count()) {
      ++out.rate.numerator;
      out.extra.push_back(tmpl.id);
    }
  }
  return out;
}

std::vector<AmbiguousTemplate> ambiguous_templates(const parsers::ParseResult& parsed,
                                                   const LabelSet& labels) {
  std::vector<AmbiguousTemplate> tally(parsed.templates.size());
  for (std::size_t i = 0; i < tally.size(); ++i) tally[i].tmpl = parsed.templates[i];
  for (const auto& [line, id] : parsed.assignment) {
    const auto label = labels.find(line);
    if (!label) throw DataError("assigned line has no label", line);
    if (*label == Label::Anomalous) {
      ++tally.at(id).anomalous_count;
    } else {
      ++tally.at(id).normal_count;
    }
  }
  std::vector<AmbiguousTemplate> out;
  for (auto& t : tally) {
    if (t.normal_count > 0 && t.anomalous_count > 0) out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(), [](const AmbiguousTemplate& a, const AmbiguousTemplate& b) {
    return a.total() > b.total();
  });
  return out;
}

void write_oov_tsv(std::ostream& out, std::span<const SplitRow> rows) {
  out << "train_fraction\ttrain_unique_words\ttest_unique_words\toov_unique_words\t"
         "unique_word_oov_ratio\ttest_messages\toov_messages\tmessage_oov_ratio\t"
         "test_templates\toov_templates\ttemplate_oov_ratio\n";
  out << std::setprecision(6) << std::fixed;
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << std::setprecision(2) << row.train_fraction << std::setprecision(6) << '\t'
        << r.train_unique_words << '\t' << r.unique_words.denominator << '\t'
        << r.unique_words.numerator << '\t' << r.unique_word_oov_ratio() << '\t'
        << r.messages.denominator << '\t' << r.messages.numerator << '\t' << r.message_oov_ratio();
    if (r.templates) {
      out << '\t' << r.templates->denominator << '\t' << r.templates->numerator << '\t'
          << r.templates->value();
    } else {
      out << "\t\t\t";
    }
    out << '\n';
  }
}

void write_oov_table(std::ostream& out, std::span<const SplitRow> rows) {
  auto pct = [](const Ratio& r) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(2) << 100.0 * r.value() << "% (" << r.numerator << "/"
      << r.denominator << ")";
    return s.str();
  };
  out << std::left << std::setw(8) << "train" << std::setw(34) << "unseen unique words"
      << std::setw(34) << "messages with unseen words"
      << "templates with unseen words\n";
  for (const auto& row : rows) {
    std::ostringstream frac;
    frac << std::fixed << std::setprecision(0) << 100.0 * row.train_fraction << "%";
    out << std::left << std::setw(8) << frac.str() << std::setw(34) << pct(row.report.unique_words)
        << std::setw(34) << pct(row.report.messages)
        << (row.report.templates ? pct(*row.report.templates) : std::string("-")) << '\n';
  }
}

}  // namespace neurallog::study
