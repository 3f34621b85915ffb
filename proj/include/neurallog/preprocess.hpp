#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace neurallog {

/// Cleaned words of one message; every token matches [a-z]+.
struct MessageTokens {
  std::vector<std::string> tokens;
  std::size_t source_line_no = 0;
};

using StopwordSet = std::set<std::string, std::less<>>;

/// {for, to, the, a, an, of, on, in, at, is, are, was, were, by, with, from}
const StopwordSet& default_stopwords();

/// Newline-delimited list; blank lines ignored, entries lowercased.
StopwordSet load_stopwords(const std::filesystem::path& path);

/// True for whitespace and : , . ; ( ) [ ] { } = " '
bool is_delimiter(char c);

/// Splits on delimiters, lowercases, drops pieces holding any non-letter
/// and pieces found in `stopwords` (pass nullptr to keep them all).
MessageTokens preprocess_message(std::string_view content,
                                 const StopwordSet* stopwords = &default_stopwords(),
                                 std::size_t source_line_no = 0);

}  // namespace neurallog
