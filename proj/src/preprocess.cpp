#include "neurallog/preprocess.hpp"

#include <algorithm>
#include <fstream>

#include "neurallog/core.hpp"

namespace neurallog {

namespace {

bool is_ascii_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

char to_lower_ascii(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

}  // namespace

const StopwordSet& default_stopwords() {
  static const StopwordSet words{"for", "to",  "the", "a",    "an",   "of",   "on",   "in",
                                 "at",  "is",  "are", "was",  "were", "by",   "with", "from"};
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword file " + path.string());
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    std::string word;
    for (char c : line) {
      if (c != '\r' && c != ' ' && c != '\t') word += to_lower_ascii(c);
    }
    if (!word.empty()) words.insert(std::move(word));
  }
  return words;
}

bool is_delimiter(char c) {
  switch (c) {
    case ' ': case '\t': case '\n': case '\r': case '\v': case '\f':
    case ':': case ',': case '.': case ';':
    case '(': case ')': case '[': case ']': case '{': case '}':
    case '=': case '"': case '\'':
      return true;
    default:
      return false;
  }
}

MessageTokens preprocess_message(std::string_view content, const StopwordSet* stopwords,
                                 std::size_t source_line_no) {
  MessageTokens out;
  out.source_line_no = source_line_no;
  std::size_t i = 0;
  while (i < content.size()) {
    while (i < content.size() && is_delimiter(content[i])) ++i;
    const std::size_t start = i;
    while (i < content.size() && !is_delimiter(content[i])) ++i;
    if (i == start) continue;
    const std::string_view piece = content.substr(start, i - start);
    if (!std::all_of(piece.begin(), piece.end(), is_ascii_letter)) continue;
    std::string word(piece);
    std::transform(word.begin(), word.end(), word.begin(), to_lower_ascii);
    if (stopwords != nullptr && stopwords->contains(word)) continue;
    out.tokens.push_back(std::move(word));
  }
  return out;
}

}  // namespace neurallog
