#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "neurallog/preprocess.hpp"

namespace neurallog::wordpiece {

using PieceId = std::uint32_t;

struct VocabOptions {
  std::string marker = "##";
  std::string unk = "[UNK]";
  std::size_t max_word_len = 100;
};

/// WordPiece vocabulary. Entry 0 is always the unknown token; word-internal
/// pieces carry the continuation marker as a prefix.
class SubwordVocab {
 public:
  SubwordVocab() : SubwordVocab(std::vector<std::string>{}, VocabOptions{}) {}

  /// `entries` must not contain duplicates or empty strings; the unknown
  /// token is inserted at index 0 when missing.
  SubwordVocab(std::vector<std::string> entries, VocabOptions options);

  std::size_t size() const { return entries_.size(); }
  PieceId unk_id() const { return 0; }
  const std::string& piece(PieceId id) const { return entries_.at(id); }
  std::optional<PieceId> find(std::string_view piece) const;
  bool contains(std::string_view piece) const { return find(piece).has_value(); }
  std::size_t longest_piece() const { return longest_; }

  const VocabOptions& options() const { return options_; }
  const std::vector<std::string>& entries() const { return entries_; }

  bool is_continuation(std::string_view piece) const;
  /// Appends a piece if absent; returns its id either way.
  PieceId add(std::string piece);

  /// One piece per line, UTF-8, first line the unknown token.
  void save(const std::filesystem::path& path) const;
  static SubwordVocab load(const std::filesystem::path& path, VocabOptions options = {});

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::vector<std::string> entries_;
  std::unordered_map<std::string, PieceId, Hash, std::equal_to<>> index_;
  VocabOptions options_;
  std::size_t longest_ = 0;
};

/// Every observed character in word-initial and continuation form, sorted.
std::vector<std::string> base_alphabet(std::span<const MessageTokens> corpus,
                                       const VocabOptions& options = {});

/// Likelihood-scored merge training: starting from base_alphabet + unk, merges
/// the adjacent pair maximizing count(ab) / (count(a) * count(b)) until the
/// vocabulary holds `target_size` entries or no pair occurs twice.
/// Ties go to the lexicographically smallest merged piece.
SubwordVocab train_vocab(std::span<const MessageTokens> corpus, std::size_t target_size,
                         const VocabOptions& options = {});

/// Greedy longest-match-first. A word with an unmatched position, or longer
/// than max_word_len, becomes the single unknown piece.
std::vector<std::string> encode_token(std::string_view word, const SubwordVocab& vocab);
std::vector<PieceId> encode_token_ids(std::string_view word, const SubwordVocab& vocab);

std::vector<std::string> encode_message(const MessageTokens& tokens, const SubwordVocab& vocab);
std::vector<PieceId> encode_message_ids(const MessageTokens& tokens, const SubwordVocab& vocab);

}  // namespace neurallog::wordpiece
