#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace neurallog {

enum class Label : std::uint8_t { Normal = 0, Anomalous = 1 };

std::string_view to_string(Label label);

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data. Carries the 1-based line of the
/// offending input when one is known.
class DataError : public Error {
 public:
  explicit DataError(const std::string& message,
                     std::optional<std::size_t> line = std::nullopt);

  std::optional<std::size_t> line() const { return line_; }

 private:
  std::optional<std::size_t> line_;
};

/// Invalid command-line usage or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared inside a numerical computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

struct RawLogRecord {
  std::size_t line_no = 0;
  std::int64_t timestamp = 0;
  std::string verbosity;
  std::string component;
  std::string content;
  Label label = Label::Normal;
};

struct SessionOrigin {
  std::string session_id;
  bool operator==(const SessionOrigin&) const = default;
};

struct WindowOrigin {
  std::size_t start_index = 0;
  bool operator==(const WindowOrigin&) const = default;
};

using SequenceOrigin = std::variant<SessionOrigin, WindowOrigin>;

/// An ordered group of records. Members are indices into the record list
/// the sequence was built from, in source order.
struct LogSequence {
  std::vector<std::size_t> members;
  Label label = Label::Normal;
  SequenceOrigin origin;
};

/// Ground-truth labels keyed by record line number or by session id.
class LabelSet {
 public:
  void set(std::size_t line_no, Label label);
  void set(const std::string& session_id, Label label);

  std::optional<Label> find(std::size_t line_no) const;
  std::optional<Label> find(const std::string& session_id) const;

  bool empty() const { return by_line_.empty() && by_session_.empty(); }

  static LabelSet from_records(std::span<const RawLogRecord> records);

 private:
  std::map<std::size_t, Label> by_line_;
  std::map<std::string, Label> by_session_;
};

/// Anomalous iff any member record is anomalous. Throws
/// std::invalid_argument("empty window") on empty input.
Label label_window(std::span<const RawLogRecord> records);

/// Same rule over a sequence's member indices into `records`.
Label label_window(std::span<const RawLogRecord> records,
                   std::span<const std::size_t> members);

/// Text fed to the semantic pipeline: verbosity, component and content
/// joined by single spaces, empty header fields skipped.
std::string message_text(const RawLogRecord& record);

}  // namespace neurallog
