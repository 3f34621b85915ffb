#include <doctest.h>

#include <filesystem>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "neurallog/core.hpp"
#include "neurallog/random.hpp"
#include "neurallog/wordpiece.hpp"

using namespace neurallog;
using namespace neurallog::wordpiece;

namespace {

using Pieces = std::vector<std::string>;

MessageTokens msg(std::vector<std::string> words) { return MessageTokens{std::move(words), 0}; }

// Straight transcription of greedy longest-match, no precomputed lengths.
Pieces brute_encode(const std::string& word, const SubwordVocab& vocab) {
  if (word.size() > vocab.options().max_word_len) return {vocab.options().unk};
  Pieces out;
  std::size_t i = 0;
  while (i < word.size()) {
    bool matched = false;
    for (std::size_t j = word.size(); j > i; --j) {
      const std::string cand = (i == 0 ? "" : "##") + word.substr(i, j - i);
      if (vocab.contains(cand)) {
        out.push_back(cand);
        i = j;
        matched = true;
        break;
      }
    }
    if (!matched) return {vocab.options().unk};
  }
  return out;
}

// Merge trainer over strings, recounting everything from scratch each round.
std::vector<std::string> brute_train(const std::vector<MessageTokens>& corpus, std::size_t target) {
  std::map<std::string, long> freq;
  for (const auto& m : corpus)
    for (const auto& w : m.tokens) ++freq[w];
  std::vector<std::pair<Pieces, long>> words;
  std::vector<std::string> vocab = {"[UNK]"};
  std::set<std::string> base;
  for (const auto& [w, f] : freq) {
    Pieces p;
    for (std::size_t i = 0; i < w.size(); ++i) {
      p.push_back(i == 0 ? std::string(1, w[i]) : "##" + std::string(1, w[i]));
      base.insert(std::string(1, w[i]));
      base.insert("##" + std::string(1, w[i]));
    }
    words.emplace_back(p, f);
  }
  vocab.insert(vocab.end(), base.begin(), base.end());
  while (vocab.size() < target) {
    std::map<std::string, long> unit;
    std::map<std::pair<std::string, std::string>, long> pairs;
    for (const auto& [p, f] : words) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        unit[p[i]] += f;
        if (i + 1 < p.size()) pairs[{p[i], p[i + 1]}] += f;
      }
    }
    double best = -1;
    std::string best_merged;
    std::pair<std::string, std::string> best_pair;
    for (const auto& [pr, c] : pairs) {
      if (c < 2) continue;
      const double score = static_cast<double>(c) / (static_cast<double>(unit[pr.first]) * unit[pr.second]);
      const std::string merged = pr.first + pr.second.substr(2);
      if (score > best + 1e-15 || (std::abs(score - best) <= 1e-15 && merged < best_merged)) {
        best = score;
        best_merged = merged;
        best_pair = pr;
      }
    }
    if (best < 0) break;
    if (std::find(vocab.begin(), vocab.end(), best_merged) == vocab.end()) vocab.push_back(best_merged);
    for (auto& [p, f] : words) {
      Pieces next;
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (i + 1 < p.size() && p[i] == best_pair.first && p[i + 1] == best_pair.second) {
          next.push_back(best_merged);
          ++i;
        } else {
          next.push_back(p[i]);
        }
      }
      p = next;
    }
  }
  return vocab;
}

std::string random_word(Rng& rng, std::string_view alphabet, std::size_t max_len) {
  std::string w;
  const std::size_t len = 1 + rng.below(max_len);
  for (std::size_t i = 0; i < len; ++i) w += alphabet[rng.below(alphabet.size())];
  return w;
}

}  // namespace

TEST_SUITE("wordpiece") {
  TEST_CASE("small vocabulary examples") {
    const SubwordVocab v({"a", "##b"}, {});
    CHECK(encode_token("abb", v) == Pieces{"a", "##b", "##b"});
    CHECK(encode_token("ac", v) == Pieces{"[UNK]"});
    CHECK(encode_token("b", v) == Pieces{"[UNK]"});
    CHECK(v.size() == 3);
    CHECK(v.unk_id() == 0);
  }

  TEST_CASE("longest match first") {
    const SubwordVocab v({"data", "d", "##block", "##b", "##scan", "##ner", "##n"}, {});
    CHECK(encode_token("datablockscanner", v) == Pieces{"data", "##block", "##scan", "##ner"});
  }

  TEST_CASE("words longer than the limit are unknown") {
    const SubwordVocab v({"a", "##a"}, {});
    CHECK(encode_token(std::string(100, 'a'), v).size() == 100);
    CHECK(encode_token(std::string(101, 'a'), v) == Pieces{"[UNK]"});
  }

  TEST_CASE("encoder agrees with brute force") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<std::string> entries;
      std::set<std::string> seen;
      for (int k = 0; k < 12; ++k) {
        std::string p = random_word(rng, "abcd", 3);
        if (rng.below(2)) p = "##" + p;
        if (seen.insert(p).second) entries.push_back(p);
      }
      const SubwordVocab v(entries, {});
      for (int k = 0; k < 20; ++k) {
        const std::string w = random_word(rng, "abcde", 8);
        const auto got = encode_token(w, v);
        CHECK(got == brute_encode(w, v));
        if (got.size() != 1 || got[0] != "[UNK]") {
          std::string joined;
          for (const auto& p : got) joined += v.is_continuation(p) ? p.substr(2) : p;
          CHECK(joined == w);
        }
      }
    }
  }

  TEST_CASE("message encoding concatenates words") {
    const SubwordVocab v({"ab", "c", "##c"}, {});
    CHECK(encode_message(msg({"ab", "cc", "x"}), v) == Pieces{"ab", "c", "##c", "[UNK]"});
    CHECK(encode_message_ids(msg({"ab"}), v) == std::vector<PieceId>{1});
  }

  TEST_CASE("base alphabet") {
    const std::vector<MessageTokens> corpus = {msg({"ba", "c"})};
    CHECK(base_alphabet(corpus) == Pieces{"##a", "##b", "##c", "a", "b", "c"});
  }

  TEST_CASE("training merges by likelihood score") {
    const std::vector<MessageTokens> corpus = {msg({"low", "low", "lowest"})};
    const auto base = base_alphabet(corpus).size() + 1;
    const auto v = train_vocab(corpus, base + 3);
    REQUIRE(v.size() == base + 2);
    CHECK(v.piece(static_cast<PieceId>(base)) == "##ow");
    CHECK(v.piece(static_cast<PieceId>(base + 1)) == "low");
    CHECK(encode_token("low", v) == Pieces{"low"});
    CHECK(encode_token("lowest", v) == Pieces{"low", "##e", "##s", "##t"});
    CHECK_THROWS_AS(train_vocab(corpus, base - 1), std::invalid_argument);
    CHECK_THROWS_AS(train_vocab(std::vector<MessageTokens>{}, 10), std::invalid_argument);
  }

  TEST_CASE("training agrees with brute force") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<MessageTokens> corpus;
      std::vector<std::string> lexicon;
      for (int k = 0; k < 15; ++k) lexicon.push_back(random_word(rng, "abcdef", 7));
      for (int m = 0; m < 30; ++m) {
        std::vector<std::string> words;
        for (int k = 0; k < 4; ++k) words.push_back(lexicon[rng.below(lexicon.size())]);
        corpus.push_back(msg(words));
      }
      const std::size_t target = 13 + 30;
      CHECK(train_vocab(corpus, target).entries() == brute_train(corpus, target));
    }
  }

  TEST_CASE("vocabulary file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "neurallog_vocab.txt";
    const SubwordVocab v({"ab", "##c"}, {});
    v.save(path);
    const auto back = SubwordVocab::load(path);
    CHECK(back.entries() == v.entries());
    {
      std::ofstream out(path);
      out << "ab\n[UNK]\n";
    }
    CHECK_THROWS_AS(SubwordVocab::load(path), DataError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(SubwordVocab({"a", "a"}, {}), std::invalid_argument);
  }
}
