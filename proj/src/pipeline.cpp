#include "neurallog/pipeline.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

#include "neurallog/preprocess.hpp"

namespace neurallog::pipeline {

Mode parse_mode(std::string_view name) {
  if (name == "raw") return Mode::Raw;
  if (name == "template") return Mode::Template;
  if (name == "index") return Mode::Index;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (expected raw, template or index)");
}

Provider parse_provider(std::string_view name) {
  if (name == "table") return Provider::Table;
  if (name == "trainable") return Provider::Trainable;
  throw std::invalid_argument("unknown embedding provider '" + std::string(name) +
                              "' (expected table or trainable)");
}

Grouping parse_grouping(std::string_view name) {
  if (name == "window") return Grouping::Window;
  if (name == "session") return Grouping::Session;
  throw std::invalid_argument("unknown grouping '" + std::string(name) + "' (expected window or session)");
}

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Raw: return "raw";
    case Mode::Template: return "template";
    case Mode::Index: return "index";
  }
  return "raw";
}

std::string_view to_string(Provider provider) {
  return provider == Provider::Table ? "table" : "trainable";
}

std::string_view to_string(Grouping grouping) {
  return grouping == Grouping::Window ? "window" : "session";
}

void PipelineConfig::validate() const {
  split.validate();
  window.validate();
  drain.validate();
  if (mode == Mode::Index && provider == Provider::Table) {
    throw std::invalid_argument("index mode builds its own vectors and cannot use an embedding table");
  }
  if (provider == Provider::Table && embeddings.empty()) {
    throw std::invalid_argument("the table provider needs an embeddings file");
  }
  if (grouping == Grouping::Window && split.mode == ingest::SplitMode::RandomBySession) {
    throw std::invalid_argument("random splitting applies to session grouping only");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument("validation fraction must lie strictly between 0 and 1");
  }
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be positive");
}

Sequences build_sequences(std::vector<RawLogRecord> records, const PipelineConfig& config) {
  Sequences out;
  ingest::sort_chronologically(records);
  out.records = std::move(records);
  const std::span<const RawLogRecord> all(out.records);

  if (config.grouping == Grouping::Window) {
    if (all.size() < 2) throw std::invalid_argument("split impossible");
    const std::size_t cut = ingest::split_point(all.size(), config.split.train_fraction);
    out.train = ingest::sliding_windows(all.first(cut), config.window);
    out.test = ingest::sliding_windows(all.subspan(cut), config.window);
    for (auto& seq : out.test) {
      for (auto& m : seq.members) m += cut;
      if (auto* w = std::get_if<WindowOrigin>(&seq.origin)) w->start_index += cut;
    }
    return out;
  }

  std::optional<LabelSet> labels;
  if (!config.session_labels.empty()) labels = ingest::read_session_labels(config.session_labels);
  auto grouping = ingest::group_by_session(all, config.session_pattern, labels ? &*labels : nullptr);
  out.dropped = grouping.dropped;
  auto split = ingest::split_items(std::move(grouping.sessions), config.split);
  out.train = std::move(split.train);
  out.test = std::move(split.test);
  return out;
}

std::size_t longest_sequence(const Sequences& seqs) {
  std::size_t n = 0;
  for (const auto* part : {&seqs.train, &seqs.test}) {
    for (const auto& s : *part) n = std::max(n, s.members.size());
  }
  return n;
}

namespace {

// Record indices that belong to training sequences, in record order.
std::vector<std::size_t> train_record_indices(const Sequences& seqs) {
  std::vector<char> used(seqs.records.size(), 0);
  for (const auto& s : seqs.train) {
    for (auto m : s.members) used[m] = 1;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (used[i]) out.push_back(i);
  }
  return out;
}

std::string header_prefix(const RawLogRecord& r) {
  std::string s;
  for (const auto* f : {&r.verbosity, &r.component}) {
    if (f->empty()) continue;
    s += *f;
    s += ' ';
  }
  return s;
}

}  // namespace

Prepared prepare(const Sequences& seqs, const PipelineConfig& config, const PrepareOptions& options) {
  config.validate();
  if (seqs.train.size() < 2) {
    throw std::invalid_argument("need at least two training sequences to hold out validation data");
  }
  if (seqs.test.empty()) throw std::invalid_argument("empty test set");
  if (options.table && options.table->dim() != options.dim) {
    throw std::invalid_argument("embedding table dim " + std::to_string(options.table->dim()) +
                                " differs from model dim " + std::to_string(options.dim));
  }
  if (config.provider == Provider::Table && !options.table) {
    throw std::invalid_argument("table provider without a loaded table");
  }

  Prepared out;
  out.bank = model::InputBank(options.dim);
  const auto& records = seqs.records;

  if (config.mode != Mode::Raw) out.parse = parsers::drain_parse(records, config.drain);

  // Token list of every record under the chosen mode.
  std::vector<MessageTokens> tokens(records.size());
  if (config.mode != Mode::Index) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      std::string text;
      if (config.mode == Mode::Raw) {
        text = message_text(r);
      } else {
        text = header_prefix(r) + out.parse->templates.at(out.parse->assignment.at(r.line_no)).render();
      }
      tokens[i] = preprocess_message(text, &default_stopwords(), r.line_no);
    }
  }

  const bool needs_vocab = config.mode != Mode::Index &&
                           (config.provider == Provider::Trainable ||
                            config.miss_policy == embed::MissPolicy::FallbackTrainable);
  if (needs_vocab) {
    if (options.vocab) {
      out.vocab = *options.vocab;
    } else {
      std::vector<MessageTokens> corpus;
      for (auto i : train_record_indices(seqs)) corpus.push_back(tokens[i]);
      const std::size_t base = wordpiece::base_alphabet(corpus).size() + 1;
      out.vocab = wordpiece::train_vocab(corpus, std::max(config.vocab_size, base));
    }
  }

  // One bank entry per distinct key.
  std::unordered_map<std::string, std::uint32_t> ids;
  std::vector<std::uint32_t> record_input(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::string key;
    if (config.mode == Mode::Index) {
      key = std::to_string(out.parse->assignment.at(records[i].line_no));
    } else {
      key = embed::canonical_key(tokens[i]);
    }
    if (auto it = ids.find(key); it != ids.end()) {
      record_input[i] = it->second;
      continue;
    }
    std::uint32_t id = 0;
    if (config.mode == Mode::Index) {
      const auto v = embed::template_index_embedding(out.parse->assignment.at(records[i].line_no),
                                                     out.parse->templates.size(), options.dim);
      id = out.bank.add_fixed(v);
    } else if (config.provider == Provider::Trainable) {
      id = out.bank.add_pieces(wordpiece::encode_message_ids(tokens[i], *out.vocab));
    } else if (const auto* row = options.table->find(key)) {
      id = out.bank.add_fixed(std::vector<double>(row->begin(), row->end()));
    } else {
      ++out.table_misses;
      switch (config.miss_policy) {
        case embed::MissPolicy::Error:
          throw DataError("no embedding for message '" + key + "'", records[i].line_no);
        case embed::MissPolicy::ZeroVector:
          id = out.bank.add_fixed(std::vector<double>(options.dim, 0.0));
          break;
        case embed::MissPolicy::FallbackTrainable:
          id = out.bank.add_pieces(wordpiece::encode_message_ids(tokens[i], *out.vocab));
          break;
      }
    }
    ids.emplace(std::move(key), id);
    record_input[i] = id;
  }

  auto to_window = [&](const LogSequence& seq, std::size_t origin) {
    model::Window w;
    w.label = seq.label;
    w.origin = origin;
    std::size_t n = seq.members.size();
    if (n > options.seq_len) {
      n = options.seq_len;
      ++out.truncated;
    }
    for (std::size_t k = 0; k < n; ++k) w.messages.push_back(record_input[seq.members[k]]);
    return w;
  };

  const std::size_t fit = ingest::split_point(seqs.train.size(), 1.0 - config.val_fraction);
  for (std::size_t i = 0; i < seqs.train.size(); ++i) {
    (i < fit ? out.train : out.val).push_back(to_window(seqs.train[i], i));
  }
  for (std::size_t i = 0; i < seqs.test.size(); ++i) out.test.push_back(to_window(seqs.test[i], i));
  return out;
}

std::vector<std::vector<double>> count_vectors(std::span<const LogSequence> sequences,
                                               const Sequences& seqs,
                                               const parsers::ParseResult& parse) {
  std::vector<std::vector<double>> out;
  out.reserve(sequences.size());
  for (const auto& s : sequences) {
    const auto counts = parsers::seq_to_count_vector(s, seqs.records, parse.assignment, parse.templates.size());
    out.emplace_back(counts.begin(), counts.end());
  }
  return out;
}

}  // namespace neurallog::pipeline
