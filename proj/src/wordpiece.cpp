#include "neurallog/wordpiece.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "neurallog/core.hpp"

namespace neurallog::wordpiece {

SubwordVocab::SubwordVocab(std::vector<std::string> entries, VocabOptions options)
    : options_(std::move(options)) {
  add(options_.unk);
  for (auto& e : entries) {
    if (e.empty()) throw std::invalid_argument("empty vocabulary entry");
    if (e == options_.unk) continue;
    if (index_.contains(e)) throw std::invalid_argument("duplicate vocabulary entry: " + e);
    add(std::move(e));
  }
}

std::optional<PieceId> SubwordVocab::find(std::string_view piece) const {
  auto it = index_.find(piece);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

bool SubwordVocab::is_continuation(std::string_view piece) const {
  return piece.size() > options_.marker.size() && piece.starts_with(options_.marker);
}

PieceId SubwordVocab::add(std::string piece) {
  if (auto id = find(piece)) return *id;
  const auto id = static_cast<PieceId>(entries_.size());
  longest_ = std::max(longest_, piece.size());
  index_.emplace(piece, id);
  entries_.push_back(std::move(piece));
  return id;
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& e : entries_) out << e << '\n';
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path, VocabOptions options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != options.unk) {
        throw DataError("first vocabulary line must be the unknown token " + options.unk, 1);
      }
      continue;
    }
    if (line.empty()) throw DataError("empty vocabulary entry", line_no);
    entries.push_back(line);
  }
  if (line_no == 0) throw DataError("empty vocabulary file " + path.string());
  try {
    return SubwordVocab(std::move(entries), std::move(options));
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

std::vector<std::string> base_alphabet(std::span<const MessageTokens> corpus,
                                       const VocabOptions& options) {
  std::set<char> chars;
  for (const auto& msg : corpus) {
    for (const auto& word : msg.tokens) chars.insert(word.begin(), word.end());
  }
  std::vector<std::string> out;
  for (char c : chars) {
    out.emplace_back(1, c);
    out.push_back(options.marker + c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

SubwordVocab train_vocab(std::span<const MessageTokens> corpus, std::size_t target_size,
                         const VocabOptions& options) {
  if (corpus.empty()) throw std::invalid_argument("cannot train a vocabulary on an empty corpus");
  SubwordVocab vocab(base_alphabet(corpus, options), options);
  if (target_size < vocab.size()) {
    throw std::invalid_argument("target_size " + std::to_string(target_size) +
                                " is below the base vocabulary size " +
                                std::to_string(vocab.size()));
  }

  std::map<std::string, std::uint64_t> word_freq;
  for (const auto& msg : corpus) {
    for (const auto& word : msg.tokens) ++word_freq[word];
  }
  struct Word {
    std::vector<PieceId> pieces;
    std::uint64_t freq;
  };
  std::vector<Word> words;
  words.reserve(word_freq.size());
  for (const auto& [text, freq] : word_freq) {
    Word w{{}, freq};
    for (std::size_t i = 0; i < text.size(); ++i) {
      const std::string piece = i == 0 ? std::string(1, text[i]) : options.marker + text[i];
      w.pieces.push_back(*vocab.find(piece));
    }
    words.push_back(std::move(w));
  }

  const std::size_t marker_len = options.marker.size();
  while (vocab.size() < target_size) {
    std::vector<std::uint64_t> unit(vocab.size(), 0);
    std::map<std::pair<PieceId, PieceId>, std::uint64_t> pairs;
    for (const auto& w : words) {
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        unit[w.pieces[i]] += w.freq;
        if (i + 1 < w.pieces.size()) pairs[{w.pieces[i], w.pieces[i + 1]}] += w.freq;
      }
    }

    // Best pair by exact rational comparison of count(ab) / (count(a) count(b)).
    bool found = false;
    std::pair<PieceId, PieceId> best{};
    std::uint64_t best_num = 0;
    unsigned __int128 best_den = 1;
    std::string best_merged;
    for (const auto& [pair, count] : pairs) {
      if (count < 2) continue;
      const unsigned __int128 den =
          static_cast<unsigned __int128>(unit[pair.first]) * unit[pair.second];
      const unsigned __int128 lhs = static_cast<unsigned __int128>(count) * best_den;
      const unsigned __int128 rhs = static_cast<unsigned __int128>(best_num) * den;
      std::string merged = vocab.piece(pair.first) + vocab.piece(pair.second).substr(marker_len);
      if (!found || lhs > rhs || (lhs == rhs && merged < best_merged)) {
        found = true;
        best = pair;
        best_num = count;
        best_den = den;
        best_merged = std::move(merged);
      }
    }
    if (!found) break;

    const PieceId merged_id = vocab.add(best_merged);
    for (auto& w : words) {
      std::vector<PieceId> next;
      next.reserve(w.pieces.size());
      for (std::size_t i = 0; i < w.pieces.size(); ++i) {
        if (i + 1 < w.pieces.size() && w.pieces[i] == best.first && w.pieces[i + 1] == best.second) {
          next.push_back(merged_id);
          ++i;
        } else {
          next.push_back(w.pieces[i]);
        }
      }
      w.pieces = std::move(next);
    }
  }
  return vocab;
}

std::vector<PieceId> encode_token_ids(std::string_view word, const SubwordVocab& vocab) {
  const auto& opts = vocab.options();
  if (word.empty()) return {};
  if (word.size() > opts.max_word_len) return {vocab.unk_id()};
  std::vector<PieceId> out;
  std::string candidate;
  std::size_t start = 0;
  while (start < word.size()) {
    const std::size_t prefix = start == 0 ? 0 : opts.marker.size();
    const std::size_t max_len =
        vocab.longest_piece() > prefix ? vocab.longest_piece() - prefix : 0;
    std::size_t end = std::min(word.size(), start + max_len);
    std::optional<PieceId> match;
    for (; end > start; --end) {
      candidate.assign(start == 0 ? "" : opts.marker);
      candidate.append(word.substr(start, end - start));
      if ((match = vocab.find(candidate))) break;
    }
    if (!match) return {vocab.unk_id()};
    out.push_back(*match);
    start = end;
  }
  return out;
}

std::vector<std::string> encode_token(std::string_view word, const SubwordVocab& vocab) {
  std::vector<std::string> out;
  for (PieceId id : encode_token_ids(word, vocab)) out.push_back(vocab.piece(id));
  return out;
}

std::vector<PieceId> encode_message_ids(const MessageTokens& tokens, const SubwordVocab& vocab) {
  std::vector<PieceId> out;
  for (const auto& word : tokens.tokens) {
    auto ids = encode_token_ids(word, vocab);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::vector<std::string> encode_message(const MessageTokens& tokens, const SubwordVocab& vocab) {
  std::vector<std::string> out;
  for (PieceId id : encode_message_ids(tokens, vocab)) out.push_back(vocab.piece(id));
  return out;
}

}  // namespace neurallog::wordpiece
