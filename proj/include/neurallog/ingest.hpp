#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "neurallog/core.hpp"
#include "neurallog/random.hpp"

namespace neurallog::ingest {

enum class SplitMode { Chronological, RandomBySession };

struct SplitSpec {
  double train_fraction = 0.8;
  SplitMode mode = SplitMode::Chronological;
  std::uint64_t seed = 0;  // RandomBySession only

  void validate() const;
};

struct WindowSpec {
  std::size_t length = 20;
  std::size_t step = 1;

  void validate() const;
};

inline constexpr const char* kHdfsSessionPattern = "(blk_-?[0-9]+)";

// ---- normalized TSV ----------------------------------------------------

/// Parses one `label\ttimestamp\tverbosity\tcomponent\tcontent` line.
/// `line_no` is the 1-based locus used in error messages.
RawLogRecord parse_normalized_line(std::string_view line, std::size_t line_no);

std::vector<RawLogRecord> read_normalized(std::istream& in);
std::vector<RawLogRecord> read_normalized(const std::filesystem::path& path);

void write_normalized(std::ostream& out, std::span<const RawLogRecord> records);
void write_normalized(const std::filesystem::path& path, std::span<const RawLogRecord> records);

// ---- dataset adapters --------------------------------------------------

struct AdaptStats {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
  std::size_t empty_lines = 0;
};

/// BGL-native lines: `<alert|-> <epoch> <date> <node> <time> <node> <type>
/// <component> <level> <content...>`. Accepted lines go to `out` as
/// normalized TSV, unparseable lines to `rejects` with a reason column.
AdaptStats adapt_bgl(std::istream& in, std::ostream& out, std::ostream& rejects);

/// One record per non-empty line, label Normal, timestamp = line ordinal,
/// whole line as content.
AdaptStats adapt_generic(std::istream& in, std::ostream& out);

/// HDFS-style `BlockId,Label` CSV (header optional) into session labels.
LabelSet read_session_labels(const std::filesystem::path& path);

// ---- grouping, windowing, splitting -------------------------------------

/// Stable sort by (timestamp, line_no).
void sort_chronologically(std::vector<RawLogRecord>& records);

struct SessionGrouping {
  std::vector<LogSequence> sessions;
  std::size_t dropped = 0;
};

/// One sequence per distinct id captured by group 1 of `id_pattern`, in order
/// of first appearance. Labels come from `session_labels` when it has the id,
/// otherwise the OR over member labels.
SessionGrouping group_by_session(std::span<const RawLogRecord> records,
                                 const std::string& id_pattern = kHdfsSessionPattern,
                                 const LabelSet* session_labels = nullptr);

std::vector<LogSequence> sliding_windows(std::span<const RawLogRecord> records,
                                         const WindowSpec& spec);

/// Windows over `count` positions without labels; [start, start+len) ranges.
std::vector<std::pair<std::size_t, std::size_t>> window_ranges(std::size_t count,
                                                               const WindowSpec& spec);

std::size_t split_point(std::size_t n, double train_fraction);

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> test;
};

/// Chronological: first floor(frac*n) items to train, in input order.
/// RandomBySession: seeded shuffle, then the same cut.
template <typename T>
Split<T> split_items(std::vector<T> items, const SplitSpec& spec) {
  spec.validate();
  if (items.size() < 2) throw std::invalid_argument("split impossible");
  if (spec.mode == SplitMode::RandomBySession) {
    Rng rng(spec.seed);
    rng.shuffle(items);
  }
  const std::size_t cut = split_point(items.size(), spec.train_fraction);
  Split<T> out;
  out.train.assign(std::make_move_iterator(items.begin()),
                   std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(cut)));
  out.test.assign(std::make_move_iterator(items.begin() + static_cast<std::ptrdiff_t>(cut)),
                  std::make_move_iterator(items.end()));
  return out;
}

}  // namespace neurallog::ingest
