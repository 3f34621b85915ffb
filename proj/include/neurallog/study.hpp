#pragma once

#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "neurallog/core.hpp"
#include "neurallog/parsers.hpp"

namespace neurallog::study {

struct Ratio {
  std::size_t numerator = 0;
  std::size_t denominator = 0;

  double value() const {
    return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
  }
  bool operator==(const Ratio&) const = default;
};

/// Out-of-vocabulary statistics of a test set against a training vocabulary.
/// Words are raw whitespace tokens, compared case-sensitively.
struct OovReport {
  std::size_t train_unique_words = 0;
  Ratio unique_words;               // unseen unique test words / unique test words
  Ratio messages;                   // test messages with an unseen word / test messages
  std::optional<Ratio> templates;   // test templates with an unseen keyword / test templates

  double unique_word_oov_ratio() const { return unique_words.value(); }
  double message_oov_ratio() const { return messages.value(); }
  std::optional<double> template_oov_ratio() const {
    return templates ? std::optional<double>(templates->value()) : std::nullopt;
  }
};

std::set<std::string, std::less<>> whitespace_vocab(std::span<const RawLogRecord> records);

/// Throws std::invalid_argument when `test_records` is empty.
OovReport oov_stats(std::span<const RawLogRecord> train_records,
                    std::span<const RawLogRecord> test_records,
                    const parsers::ParseResult* test_parse = nullptr);

struct ExtraEventResult {
  Ratio rate;  // extra templates / parsed templates
  std::vector<parsers::TemplateId> extra;  // parsed template ids
};

/// A parsed template is extra when it keeps more keywords than the most
/// similar ground-truth template.
ExtraEventResult extra_event_rate(const parsers::ParseResult& parsed,
                                  std::span<const parsers::Template> gt_templates);

struct AmbiguousTemplate {
  parsers::Template tmpl;
  std::size_t normal_count = 0;
  std::size_t anomalous_count = 0;

  std::size_t total() const { return normal_count + anomalous_count; }
};

/// Templates assigned to both normal and anomalous lines, most frequent
/// first. Throws DataError naming the first assigned line without a label.
std::vector<AmbiguousTemplate> ambiguous_templates(const parsers::ParseResult& parsed,
                                                   const LabelSet& labels);

struct SplitRow {
  double train_fraction = 0.0;
  OovReport report;
};

/// Tab-separated, header first.
void write_oov_tsv(std::ostream& out, std::span<const SplitRow> rows);
/// Aligned plain-text table.
void write_oov_table(std::ostream& out, std::span<const SplitRow> rows);

}  // namespace neurallog::study
