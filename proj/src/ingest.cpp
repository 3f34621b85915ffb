#include "neurallog/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <unordered_map>

namespace neurallog::ingest {

namespace {

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// Tabs and line breaks cannot survive inside a TSV field.
std::string sanitize_field(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line, std::size_t max_fields,
                                       std::string_view* rest) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (fields.size() < max_fields) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    fields.push_back(line.substr(i, j - i));
    i = j;
  }
  while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  *rest = line.substr(std::min(i, line.size()));
  return fields;
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must lie strictly between 0 and 1");
  }
}

void WindowSpec::validate() const {
  if (length < 1 || step < 1) throw std::invalid_argument("window length and step must be >= 1");
}

RawLogRecord parse_normalized_line(std::string_view line, std::size_t line_no) {
  line = strip_cr(line);
  std::string_view fields[5];
  std::size_t start = 0;
  for (int f = 0; f < 4; ++f) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      throw DataError("expected 5 tab-separated fields, found " + std::to_string(f + 1), line_no);
    }
    fields[f] = line.substr(start, tab - start);
    start = tab + 1;
  }
  fields[4] = line.substr(start);

  RawLogRecord r;
  r.line_no = line_no;
  if (fields[0] == "0") {
    r.label = Label::Normal;
  } else if (fields[0] == "1") {
    r.label = Label::Anomalous;
  } else {
    throw DataError("unknown label value '" + std::string(fields[0]) + "'", line_no);
  }
  auto ts = parse_int<std::int64_t>(fields[1]);
  if (!ts) throw DataError("timestamp is not an integer: '" + std::string(fields[1]) + "'", line_no);
  r.timestamp = *ts;
  r.verbosity = std::string(fields[2]);
  r.component = std::string(fields[3]);
  r.content = std::string(fields[4]);
  if (is_blank(r.content)) throw DataError("empty content", line_no);
  return r;
}

std::vector<RawLogRecord> read_normalized(std::istream& in) {
  std::vector<RawLogRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (strip_cr(line).empty()) continue;
    records.push_back(parse_normalized_line(line, line_no));
  }
  return records;
}

std::vector<RawLogRecord> read_normalized(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_normalized(in);
}

void write_normalized(std::ostream& out, std::span<const RawLogRecord> records) {
  for (const auto& r : records) {
    out << (r.label == Label::Anomalous ? '1' : '0') << '\t' << r.timestamp << '\t'
        << sanitize_field(r.verbosity) << '\t' << sanitize_field(r.component) << '\t'
        << sanitize_field(r.content) << '\n';
  }
}

void write_normalized(const std::filesystem::path& path, std::span<const RawLogRecord> records) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_normalized(out, records);
}

AdaptStats adapt_bgl(std::istream& in, std::ostream& out, std::ostream& rejects) {
  AdaptStats stats;
  std::string raw;
  while (std::getline(in, raw)) {
    const std::string_view line = strip_cr(raw);
    if (is_blank(line)) {
      ++stats.empty_lines;
      continue;
    }
    std::string_view content;
    const auto fields = split_ws(line, 9, &content);
    const char* label = fields[0] == "-" ? "0" : "1";
    auto reject = [&](std::string_view reason) {
      const std::string_view ts = fields.size() > 1 ? fields[1] : std::string_view{};
      rejects << label << '\t' << sanitize_field(ts) << "\t\t\t" << sanitize_field(line) << '\t'
              << reason << '\n';
      ++stats.rejected;
    };
    if (fields.size() < 9 || content.empty()) {
      reject("too few fields");
      continue;
    }
    if (!parse_int<std::int64_t>(fields[1])) {
      reject("timestamp is not an integer");
      continue;
    }
    out << label << '\t' << fields[1] << '\t' << sanitize_field(fields[8]) << '\t'
        << sanitize_field(fields[7]) << '\t' << sanitize_field(content) << '\n';
    ++stats.accepted;
  }
  return stats;
}

AdaptStats adapt_generic(std::istream& in, std::ostream& out) {
  AdaptStats stats;
  std::string raw;
  std::size_t ordinal = 0;
  while (std::getline(in, raw)) {
    ++ordinal;
    const std::string_view line = strip_cr(raw);
    if (is_blank(line)) {
      ++stats.empty_lines;
      continue;
    }
    out << "0\t" << ordinal << "\t\t\t" << sanitize_field(line) << '\n';
    ++stats.accepted;
  }
  return stats;
}

LabelSet read_session_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  LabelSet labels;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = strip_cr(raw);
    if (is_blank(line)) continue;
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) throw DataError("expected 'id,label'", line_no);
    const std::string id(line.substr(0, comma));
    const std::string_view value = line.substr(comma + 1);
    if (value == "Normal" || value == "0") {
      labels.set(id, Label::Normal);
    } else if (value == "Anomaly" || value == "Anomalous" || value == "1") {
      labels.set(id, Label::Anomalous);
    } else if (line_no == 1) {
      continue;  // header
    } else {
      throw DataError("unknown label value '" + std::string(value) + "'", line_no);
    }
  }
  return labels;
}

void sort_chronologically(std::vector<RawLogRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const RawLogRecord& a, const RawLogRecord& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.line_no < b.line_no;
  });
}

SessionGrouping group_by_session(std::span<const RawLogRecord> records,
                                 const std::string& id_pattern, const LabelSet* session_labels) {
  const std::regex re(id_pattern);
  if (re.mark_count() < 1) {
    throw std::invalid_argument("session id pattern needs a capture group: " + id_pattern);
  }
  SessionGrouping out;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::string& content = records[i].content;
    std::vector<std::string> ids;
    for (auto it = std::sregex_iterator(content.begin(), content.end(), re);
         it != std::sregex_iterator(); ++it) {
      std::string id = (*it)[1].str();
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(std::move(id));
    }
    if (ids.empty()) {
      ++out.dropped;
      continue;
    }
    for (auto& id : ids) {
      auto [it, inserted] = index.try_emplace(id, out.sessions.size());
      if (inserted) {
        LogSequence seq;
        seq.origin = SessionOrigin{id};
        out.sessions.push_back(std::move(seq));
      }
      out.sessions[it->second].members.push_back(i);
    }
  }
  for (auto& seq : out.sessions) {
    const auto& id = std::get<SessionOrigin>(seq.origin).session_id;
    std::optional<Label> given = session_labels ? session_labels->find(id) : std::nullopt;
    seq.label = given ? *given : label_window(records, seq.members);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> window_ranges(std::size_t count,
                                                               const WindowSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  if (count == 0) return ranges;
  if (count < spec.length) {
    ranges.emplace_back(0, count);
    return ranges;
  }
  for (std::size_t start = 0; start + spec.length <= count; start += spec.step) {
    ranges.emplace_back(start, start + spec.length);
  }
  return ranges;
}

std::vector<LogSequence> sliding_windows(std::span<const RawLogRecord> records,
                                         const WindowSpec& spec) {
  std::vector<LogSequence> windows;
  for (auto [begin, end] : window_ranges(records.size(), spec)) {
    LogSequence seq;
    seq.members.resize(end - begin);
    for (std::size_t k = 0; k < seq.members.size(); ++k) seq.members[k] = begin + k;
    seq.label = label_window(records.subspan(begin, end - begin));
    seq.origin = WindowOrigin{begin};
    windows.push_back(std::move(seq));
  }
  return windows;
}

std::size_t split_point(std::size_t n, double train_fraction) {
  // The epsilon absorbs representation error such as 0.29 * 100 = 28.999...
  auto cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  return std::clamp<std::size_t>(cut, 1, n - 1);
}

}  // namespace neurallog::ingest
