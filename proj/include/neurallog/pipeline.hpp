#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "neurallog/core.hpp"
#include "neurallog/embed.hpp"
#include "neurallog/ingest.hpp"
#include "neurallog/parsers.hpp"
#include "neurallog/transformer.hpp"
#include "neurallog/wordpiece.hpp"

namespace neurallog::pipeline {

/// What a message contributes to its window: the raw message, its parsed
/// template text, or a one-hot of the template id.
enum class Mode { Raw, Template, Index };
enum class Provider { Table, Trainable };
enum class Grouping { Window, Session };

Mode parse_mode(std::string_view name);
Provider parse_provider(std::string_view name);
Grouping parse_grouping(std::string_view name);
std::string_view to_string(Mode mode);
std::string_view to_string(Provider provider);
std::string_view to_string(Grouping grouping);

struct PipelineConfig {
  Mode mode = Mode::Raw;
  Provider provider = Provider::Trainable;
  std::filesystem::path embeddings;  // table provider only
  embed::MissPolicy miss_policy = embed::MissPolicy::Error;
  ingest::SplitSpec split;
  ingest::WindowSpec window;
  Grouping grouping = Grouping::Window;
  std::string session_pattern = ingest::kHdfsSessionPattern;
  std::filesystem::path session_labels;  // optional CSV of per-session labels
  std::size_t vocab_size = 2000;
  double val_fraction = 0.1;
  parsers::DrainConfig drain;

  /// Throws std::invalid_argument for inconsistent settings.
  void validate() const;
};

/// Records in chronological order and the sequences over them, split.
struct Sequences {
  std::vector<RawLogRecord> records;
  std::vector<LogSequence> train;
  std::vector<LogSequence> test;
  std::size_t dropped = 0;  // records without a session id
};

/// Sorts the records, groups them and splits. Window grouping splits the
/// records chronologically and windows each side, so no window straddles
/// the split; session grouping splits whole sessions.
Sequences build_sequences(std::vector<RawLogRecord> records, const PipelineConfig& config);

/// Everything the model needs: distinct message inputs and windows of ids.
struct Prepared {
  model::InputBank bank;
  std::vector<model::Window> train;
  std::vector<model::Window> val;
  std::vector<model::Window> test;
  std::optional<wordpiece::SubwordVocab> vocab;
  std::optional<parsers::ParseResult> parse;
  std::size_t table_misses = 0;
  std::size_t truncated = 0;  // sequences cut to seq_len
};

struct PrepareOptions {
  std::size_t dim = embed::kDefaultDim;
  std::size_t seq_len = 20;
  const embed::EmbeddingTable* table = nullptr;
  /// A vocabulary to reuse; otherwise one is trained on the training records.
  const wordpiece::SubwordVocab* vocab = nullptr;
};

/// Builds message inputs for every sequence. The last `val_fraction` of the
/// training sequences become the validation set.
Prepared prepare(const Sequences& seqs, const PipelineConfig& config, const PrepareOptions& options);

/// Longest sequence in either part.
std::size_t longest_sequence(const Sequences& seqs);

/// Template-count vectors of the given sequences (for the LR baseline).
std::vector<std::vector<double>> count_vectors(std::span<const LogSequence> sequences,
                                               const Sequences& seqs,
                                               const parsers::ParseResult& parse);

}  // namespace neurallog::pipeline
