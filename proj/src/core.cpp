#include "neurallog/core.hpp"

#include <algorithm>

namespace neurallog {

std::string_view to_string(Label label) {
  return label == Label::Anomalous ? "Anomalous" : "Normal";
}

DataError::DataError(const std::string& message, std::optional<std::size_t> line)
    : Error(line ? "line " + std::to_string(*line) + ": " + message : message),
      line_(line) {}

void LabelSet::set(std::size_t line_no, Label label) { by_line_[line_no] = label; }

void LabelSet::set(const std::string& session_id, Label label) {
  by_session_[session_id] = label;
}

std::optional<Label> LabelSet::find(std::size_t line_no) const {
  auto it = by_line_.find(line_no);
  if (it == by_line_.end()) return std::nullopt;
  return it->second;
}

std::optional<Label> LabelSet::find(const std::string& session_id) const {
  auto it = by_session_.find(session_id);
  if (it == by_session_.end()) return std::nullopt;
  return it->second;
}

LabelSet LabelSet::from_records(std::span<const RawLogRecord> records) {
  LabelSet labels;
  for (const auto& r : records) labels.set(r.line_no, r.label);
  return labels;
}

Label label_window(std::span<const RawLogRecord> records) {
  if (records.empty()) throw std::invalid_argument("empty window");
  const bool any = std::any_of(records.begin(), records.end(), [](const RawLogRecord& r) {
    return r.label == Label::Anomalous;
  });
  return any ? Label::Anomalous : Label::Normal;
}

Label label_window(std::span<const RawLogRecord> records,
                   std::span<const std::size_t> members) {
  if (members.empty()) throw std::invalid_argument("empty window");
  for (std::size_t idx : members) {
    if (records[idx].label == Label::Anomalous) return Label::Anomalous;
  }
  return Label::Normal;
}

std::string message_text(const RawLogRecord& record) {
  std::string text;
  for (const std::string* part : {&record.verbosity, &record.component, &record.content}) {
    if (part->empty()) continue;
    if (!text.empty()) text += ' ';
    text += *part;
  }
  return text;
}

}  // namespace neurallog
