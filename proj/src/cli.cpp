#include "neurallog/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include "neurallog/checkpoint.hpp"
#include "neurallog/embed.hpp"
#include "neurallog/eval.hpp"
#include "neurallog/hash.hpp"
#include "neurallog/ingest.hpp"
#include "neurallog/parallel.hpp"
#include "neurallog/parsers.hpp"
#include "neurallog/study.hpp"
#include "neurallog/trainer.hpp"

namespace neurallog::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- config -------------------------------------------------------------

json to_json(const RunConfig& c) {
  const auto& p = c.pipeline;
  json j;
  j["dataset"] = c.dataset.string();
  j["adapter"] = c.adapter;
  j["mode"] = std::string(pipeline::to_string(p.mode));
  j["provider"] = std::string(pipeline::to_string(p.provider));
  j["embeddings"] = p.embeddings.string();
  j["miss_policy"] = std::string(embed::to_string(p.miss_policy));
  j["train_frac"] = p.split.train_fraction;
  j["split"] = p.split.mode == ingest::SplitMode::Chronological ? "chronological" : "random";
  j["window_len"] = p.window.length;
  j["window_step"] = p.window.step;
  j["grouping"] = std::string(pipeline::to_string(p.grouping));
  j["session_pattern"] = p.session_pattern;
  j["session_labels"] = p.session_labels.string();
  j["vocab_size"] = p.vocab_size;
  j["val_frac"] = p.val_fraction;
  j["vocab"] = c.vocab.string();
  j["seed"] = c.seed;
  j["out"] = c.out.string();
  j["precision"] = c.precision;
  j["threshold"] = c.threshold;
  j["model"] = {{"dim", c.model.dim},
                {"heads", c.model.heads},
                {"ffn_size", c.model.ffn_size},
                {"layers", c.model.layers},
                {"dropout", c.model.dropout},
                {"seq_len", c.model.seq_len},
                {"positional_encoding", c.model.positional_encoding}};
  j["train"] = {{"lr", c.train.lr},
                {"batch_size", c.train.batch_size},
                {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience},
                {"weight_decay", c.train.weight_decay}};
  j["drain"] = {{"depth", p.drain.depth},
                {"similarity_threshold", p.drain.similarity_threshold},
                {"max_children", p.drain.max_children}};
  return j;
}

namespace {

void require_object(const json& j, const std::string& what) {
  if (!j.is_object()) throw UsageError(what + " must be a JSON object");
}

ingest::SplitMode parse_split_mode(std::string_view s) {
  if (s == "chronological") return ingest::SplitMode::Chronological;
  if (s == "random") return ingest::SplitMode::RandomBySession;
  throw UsageError("unknown split mode '" + std::string(s) + "' (expected chronological or random)");
}

template <typename Fn>
auto as_usage(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void apply_json_impl(RunConfig& c, const json& j) {
  require_object(j, "config");
  auto& p = c.pipeline;
  for (const auto& [k, v] : j.items()) {
    if (k == "dataset") {
      c.dataset = v.get<std::string>();
    } else if (k == "adapter") {
      c.adapter = v.get<std::string>();
    } else if (k == "mode") {
      p.mode = as_usage([&] { return pipeline::parse_mode(v.get<std::string>()); });
    } else if (k == "provider") {
      p.provider = as_usage([&] { return pipeline::parse_provider(v.get<std::string>()); });
    } else if (k == "embeddings") {
      p.embeddings = v.get<std::string>();
    } else if (k == "miss_policy") {
      p.miss_policy = as_usage([&] { return embed::parse_miss_policy(v.get<std::string>()); });
    } else if (k == "train_frac") {
      p.split.train_fraction = v.get<double>();
    } else if (k == "split") {
      p.split.mode = parse_split_mode(v.get<std::string>());
    } else if (k == "window_len") {
      p.window.length = v.get<std::size_t>();
    } else if (k == "window_step") {
      p.window.step = v.get<std::size_t>();
    } else if (k == "grouping") {
      p.grouping = as_usage([&] { return pipeline::parse_grouping(v.get<std::string>()); });
    } else if (k == "session_pattern") {
      p.session_pattern = v.get<std::string>();
    } else if (k == "session_labels") {
      p.session_labels = v.get<std::string>();
    } else if (k == "vocab_size") {
      p.vocab_size = v.get<std::size_t>();
    } else if (k == "val_frac") {
      p.val_fraction = v.get<double>();
    } else if (k == "vocab") {
      c.vocab = v.get<std::string>();
    } else if (k == "seed") {
      c.seed = v.get<std::uint64_t>();
    } else if (k == "out") {
      c.out = v.get<std::string>();
    } else if (k == "precision") {
      c.precision = v.get<std::string>();
    } else if (k == "threshold") {
      c.threshold = v.get<double>();
    } else if (k == "model") {
      require_object(v, "model");
      for (const auto& [mk, mv] : v.items()) {
        if (mk == "dim") c.model.dim = mv.get<std::size_t>();
        else if (mk == "heads") c.model.heads = mv.get<std::size_t>();
        else if (mk == "ffn_size") c.model.ffn_size = mv.get<std::size_t>();
        else if (mk == "layers") c.model.layers = mv.get<std::size_t>();
        else if (mk == "dropout") c.model.dropout = mv.get<double>();
        else if (mk == "seq_len") c.model.seq_len = mv.get<std::size_t>();
        else if (mk == "positional_encoding") c.model.positional_encoding = mv.get<bool>();
        else throw UsageError("unknown config key 'model." + mk + "'");
      }
    } else if (k == "train") {
      require_object(v, "train");
      for (const auto& [tk, tv] : v.items()) {
        if (tk == "lr") c.train.lr = tv.get<double>();
        else if (tk == "batch_size") c.train.batch_size = tv.get<std::size_t>();
        else if (tk == "max_epochs") c.train.max_epochs = tv.get<std::size_t>();
        else if (tk == "patience") c.train.patience = tv.get<std::size_t>();
        else if (tk == "weight_decay") c.train.weight_decay = tv.get<double>();
        else throw UsageError("unknown config key 'train." + tk + "'");
      }
    } else if (k == "drain") {
      require_object(v, "drain");
      for (const auto& [dk, dv] : v.items()) {
        if (dk == "depth") p.drain.depth = dv.get<int>();
        else if (dk == "similarity_threshold") p.drain.similarity_threshold = dv.get<double>();
        else if (dk == "max_children") p.drain.max_children = dv.get<std::size_t>();
        else throw UsageError("unknown config key 'drain." + dk + "'");
      }
    } else {
      throw UsageError("unknown config key '" + k + "'");
    }
  }
}

}  // namespace

void apply_json(RunConfig& config, const json& j) {
  try {
    apply_json_impl(config, j);
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
}

namespace {

// ---- flag plumbing --------------------------------------------------------

// Collects flags whose values overlay the config only when given.
class Overlay {
 public:
  template <typename V, typename Apply>
  CLI::Option* option(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<V>();
    CLI::Option* opt = app->add_option(name, *value, help);
    appliers_.push_back([opt, value, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
    return opt;
  }

  template <typename Apply>
  CLI::Option* flag(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    CLI::Option* opt = app->add_flag(name, help);
    appliers_.push_back([opt, apply](RunConfig& c) {
      if (opt->count() > 0) apply(c);
    });
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& a : appliers_) a(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> appliers_;
};

void add_common(Overlay& o, CLI::App* app) {
  o.option<std::string>(app, "--dataset", "input dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; });
  o.option<std::string>(app, "--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  o.option<std::uint64_t>(app, "--seed", "root random seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
}

void add_pipeline(Overlay& o, CLI::App* app) {
  using S = std::string;
  o.option<double>(app, "--train-frac", "training fraction of the split",
                   [](RunConfig& c, double v) { c.pipeline.split.train_fraction = v; });
  o.option<S>(app, "--split", "chronological or random (sessions only)",
              [](RunConfig& c, const S& v) { c.pipeline.split.mode = parse_split_mode(v); });
  o.option<std::size_t>(app, "--window-len", "messages per window",
                        [](RunConfig& c, std::size_t v) { c.pipeline.window.length = v; });
  o.option<std::size_t>(app, "--window-step", "window stride",
                        [](RunConfig& c, std::size_t v) { c.pipeline.window.step = v; });
  o.option<S>(app, "--grouping", "window or session",
              [](RunConfig& c, const S& v) { c.pipeline.grouping = as_usage([&] { return pipeline::parse_grouping(v); }); });
  o.option<S>(app, "--session-pattern", "regex with one capture group naming the session",
              [](RunConfig& c, const S& v) { c.pipeline.session_pattern = v; });
  o.option<S>(app, "--session-labels", "CSV of session id,label",
              [](RunConfig& c, const S& v) { c.pipeline.session_labels = v; });
  o.option<S>(app, "--mode", "raw, template or index",
              [](RunConfig& c, const S& v) { c.pipeline.mode = as_usage([&] { return pipeline::parse_mode(v); }); });
  o.option<S>(app, "--provider", "table or trainable",
              [](RunConfig& c, const S& v) { c.pipeline.provider = as_usage([&] { return pipeline::parse_provider(v); }); });
  o.option<S>(app, "--embeddings", "embedding table file (implies --provider table)", [](RunConfig& c, const S& v) {
    c.pipeline.embeddings = v;
    c.pipeline.provider = pipeline::Provider::Table;
  });
  o.option<S>(app, "--miss-policy", "error, zero or fallback",
              [](RunConfig& c, const S& v) { c.pipeline.miss_policy = as_usage([&] { return embed::parse_miss_policy(v); }); });
  o.option<S>(app, "--vocab", "existing vocabulary file", [](RunConfig& c, const S& v) { c.vocab = v; });
  o.option<std::size_t>(app, "--vocab-size", "target vocabulary size",
                        [](RunConfig& c, std::size_t v) { c.pipeline.vocab_size = v; });
  o.option<double>(app, "--val-frac", "held-out share of training sequences",
                   [](RunConfig& c, double v) { c.pipeline.val_fraction = v; });
  o.option<int>(app, "--drain-depth", "Drain tree depth", [](RunConfig& c, int v) { c.pipeline.drain.depth = v; });
  o.option<double>(app, "--drain-sim", "Drain similarity threshold",
                   [](RunConfig& c, double v) { c.pipeline.drain.similarity_threshold = v; });
}

void add_model(Overlay& o, CLI::App* app) {
  using Z = std::size_t;
  o.option<Z>(app, "--dim", "model width", [](RunConfig& c, Z v) { c.model.dim = v; });
  o.option<Z>(app, "--heads", "attention heads", [](RunConfig& c, Z v) { c.model.heads = v; });
  o.option<Z>(app, "--ffn", "feed-forward width", [](RunConfig& c, Z v) { c.model.ffn_size = v; });
  o.option<Z>(app, "--layers", "encoder layers", [](RunConfig& c, Z v) { c.model.layers = v; });
  o.option<double>(app, "--dropout", "dropout rate", [](RunConfig& c, double v) { c.model.dropout = v; });
  o.flag(app, "--no-pe", "disable positional encoding", [](RunConfig& c) { c.model.positional_encoding = false; });
  o.option<double>(app, "--lr", "learning rate", [](RunConfig& c, double v) { c.train.lr = v; });
  o.option<Z>(app, "--batch-size", "batch size", [](RunConfig& c, Z v) { c.train.batch_size = v; });
  o.option<Z>(app, "--epochs", "maximum epochs", [](RunConfig& c, Z v) { c.train.max_epochs = v; });
  o.option<Z>(app, "--patience", "early-stopping patience", [](RunConfig& c, Z v) { c.train.patience = v; });
  o.option<double>(app, "--weight-decay", "AdamW weight decay", [](RunConfig& c, double v) { c.train.weight_decay = v; });
  o.option<std::string>(app, "--precision", "f64 or f32", [](RunConfig& c, const std::string& v) { c.precision = v; });
}

void add_detect(Overlay& o, CLI::App* app) {
  o.option<double>(app, "--threshold", "anomaly probability threshold", [](RunConfig& c, double v) { c.threshold = v; });
  o.option<std::string>(app, "--precision", "f64 or f32", [](RunConfig& c, const std::string& v) { c.precision = v; });
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

fs::path require_out(const RunConfig& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

void require_dataset(const RunConfig& c) {
  if (c.dataset.empty()) throw UsageError("--dataset is required");
  if (!fs::exists(c.dataset)) throw DataError("dataset not found: " + c.dataset.string());
}

void validate(const RunConfig& c) {
  as_usage([&] {
    c.pipeline.validate();
    c.model.validate();
    c.train.validate();
    return 0;
  });
  if (c.precision != "f64" && c.precision != "f32") {
    throw UsageError("--precision must be f64 or f32");
  }
}

// Run manifest: command, resolved config, seed and content hashes.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& config) {
    j_["command"] = std::move(command);
    j_["seed"] = config.seed;
    j_["config"] = to_json(config);
    j_["inputs"] = json::object();
    j_["outputs"] = json::array();
  }
  void input(const std::string& role, const fs::path& path) {
    j_["inputs"][role] = {{"path", path.string()}, {"fnv1a64", to_hex(fnv1a64_file(path))}};
  }
  void output(const fs::path& path) { j_["outputs"].push_back(path.filename().string()); }
  json& extra() { return j_; }
  void write(const fs::path& dir) const { write_json_file(dir / "manifest.json", j_); }

 private:
  json j_;
};

// ---- commands -------------------------------------------------------------

int cmd_adapt(const RunConfig& c, std::ostream& log) {
  require_dataset(c);
  const auto dir = require_out(c);
  std::ifstream in(c.dataset, std::ios::binary);
  if (!in) throw DataError("cannot open " + c.dataset.string());
  auto out = open_out(dir / "normalized.tsv");
  Manifest manifest("adapt", c);
  manifest.input("dataset", c.dataset);
  ingest::AdaptStats stats;
  if (c.adapter == "bgl") {
    auto rejects = open_out(dir / "rejects.tsv");
    stats = ingest::adapt_bgl(in, out, rejects);
    manifest.output(dir / "rejects.tsv");
  } else if (c.adapter == "generic") {
    stats = ingest::adapt_generic(in, out);
  } else {
    throw UsageError("unknown adapter '" + c.adapter + "' (expected bgl or generic)");
  }
  manifest.output(dir / "normalized.tsv");
  manifest.extra()["stats"] = {{"accepted", stats.accepted},
                               {"rejected", stats.rejected},
                               {"empty_lines", stats.empty_lines}};
  manifest.write(dir);
  log << "adapt: " << stats.accepted << " accepted, " << stats.rejected << " rejected, "
      << stats.empty_lines << " empty lines skipped\n";
  return kOk;
}

parsers::ParseResult run_parser(const std::string& name, std::span<const RawLogRecord> records,
                                const RunConfig& c, double tau) {
  if (name == "drain") return parsers::drain_parse(records, c.pipeline.drain);
  if (name == "spell") return parsers::spell_parse(records, tau);
  throw UsageError("unknown parser '" + name + "' (expected drain or spell)");
}

// Templates assigned to at least one of `lines`, ids kept.
parsers::ParseResult restrict_to(const parsers::ParseResult& parse, const std::set<std::size_t>& lines) {
  parsers::ParseResult out;
  std::set<parsers::TemplateId> used;
  for (const auto& [line, id] : parse.assignment) {
    if (lines.contains(line)) {
      out.assignment.emplace(line, id);
      used.insert(id);
    }
  }
  for (auto id : used) out.templates.push_back(parse.templates.at(id));
  return out;
}

struct StudyArgs {
  std::vector<double> fracs{0.2, 0.4, 0.6, 0.8};
  std::string parser = "drain";
  std::string templates;
  std::string assignment;
  std::string gt_templates;
  double tau = 0.5;
};

int cmd_study(const RunConfig& c, const StudyArgs& a, std::ostream& log) {
  require_dataset(c);
  const auto dir = require_out(c);
  Manifest manifest("study", c);
  manifest.input("dataset", c.dataset);
  auto records = ingest::read_normalized(c.dataset);
  ingest::sort_chronologically(records);
  if (records.size() < 2) throw DataError("split impossible: fewer than two records");

  std::optional<parsers::ParseResult> parse;
  if (!a.templates.empty() || !a.assignment.empty()) {
    if (a.templates.empty() || a.assignment.empty()) {
      throw UsageError("--templates and --assignment go together");
    }
    parse = parsers::read_parse_result(a.templates, a.assignment);
    manifest.input("templates", a.templates);
    manifest.input("assignment", a.assignment);
  } else if (a.parser != "none") {
    parse = run_parser(a.parser, records, c, a.tau);
  }

  std::vector<study::SplitRow> rows;
  for (double frac : a.fracs) {
    if (!(frac > 0.0 && frac < 1.0)) throw UsageError("split fractions must lie strictly between 0 and 1");
    const std::size_t cut = ingest::split_point(records.size(), frac);
    const std::span<const RawLogRecord> all(records);
    std::optional<parsers::ParseResult> test_parse;
    if (parse) {
      std::set<std::size_t> lines;
      for (const auto& r : all.subspan(cut)) lines.insert(r.line_no);
      test_parse = restrict_to(*parse, lines);
    }
    rows.push_back({frac, study::oov_stats(all.first(cut), all.subspan(cut), test_parse ? &*test_parse : nullptr)});
  }
  {
    auto out = open_out(dir / "oov.tsv");
    study::write_oov_tsv(out, rows);
    auto table = open_out(dir / "oov.txt");
    study::write_oov_table(table, rows);
  }
  study::write_oov_table(log, rows);
  manifest.output(dir / "oov.tsv");
  manifest.output(dir / "oov.txt");

  if (parse) {
    const auto ambiguous = study::ambiguous_templates(*parse, LabelSet::from_records(records));
    auto out = open_out(dir / "ambiguous.tsv");
    out << "template_id\ttemplate\tnormal\tanomalous\ttotal\n";
    for (const auto& t : ambiguous) {
      out << t.tmpl.id << '\t' << t.tmpl.render() << '\t' << t.normal_count << '\t'
          << t.anomalous_count << '\t' << t.total() << '\n';
    }
    manifest.output(dir / "ambiguous.tsv");
    log << "study: " << ambiguous.size() << " of " << parse->templates.size()
        << " templates cover both normal and anomalous messages\n";
  }
  if (!a.gt_templates.empty()) {
    if (!parse) throw UsageError("--gt-templates needs a parse (drop --parser none)");
    const auto gt = parsers::read_templates_csv(a.gt_templates);
    manifest.input("gt_templates", a.gt_templates);
    const auto extra = study::extra_event_rate(*parse, gt);
    auto out = open_out(dir / "extra_events.tsv");
    out << "extra\ttemplates\trate\n"
        << extra.rate.numerator << '\t' << extra.rate.denominator << '\t' << std::fixed
        << std::setprecision(6) << extra.rate.value() << '\n';
    out << "template_id\ttemplate\n";
    for (auto id : extra.extra) out << id << '\t' << parse->templates.at(id).render() << '\n';
    manifest.output(dir / "extra_events.tsv");
  }
  manifest.write(dir);
  return kOk;
}

int cmd_parse(const RunConfig& c, const std::string& parser, double tau, std::ostream& log) {
  require_dataset(c);
  const auto dir = require_out(c);
  Manifest manifest("parse", c);
  manifest.input("dataset", c.dataset);
  const auto records = ingest::read_normalized(c.dataset);
  const auto parse = run_parser(parser, records, c, tau);
  parsers::write_templates_csv(dir / "templates.csv", parse.templates);
  parsers::write_assignment_csv(dir / "assignment.csv", parse.assignment);
  manifest.output(dir / "templates.csv");
  manifest.output(dir / "assignment.csv");
  manifest.extra()["parser"] = parser;
  manifest.write(dir);
  log << "parse: " << records.size() << " messages, " << parse.templates.size() << " templates\n";
  return kOk;
}

struct Loaded {
  pipeline::Sequences seqs;
  std::optional<embed::EmbeddingTable> table;
};

Loaded load_inputs(const RunConfig& c, Manifest& manifest) {
  require_dataset(c);
  manifest.input("dataset", c.dataset);
  Loaded l;
  l.seqs = pipeline::build_sequences(ingest::read_normalized(c.dataset), c.pipeline);
  if (c.pipeline.provider == pipeline::Provider::Table) {
    l.table = embed::load_embedding_table(c.pipeline.embeddings);
    manifest.input("embeddings", c.pipeline.embeddings);
  }
  if (!c.pipeline.session_labels.empty()) manifest.input("session_labels", c.pipeline.session_labels);
  return l;
}

json history_json(const model::TrainHistory& h) {
  json epochs = json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"val_f1", e.val_f1},
                      {"improved", e.improved}});
  }
  return {{"epochs", epochs},
          {"best_epoch", h.best_epoch},
          {"loss_fallback", h.loss_fallback},
          {"stop_reason", h.stop_reason}};
}

template <typename T>
std::pair<model::ParamSet<double>, model::TrainHistory> fit(const model::ModelConfig& mc, std::size_t embedding_rows,
                                                     const pipeline::Prepared& prep,
                                                     const model::TrainConfig& tc, std::ostream& log) {
  const model::TransformerClassifier<T> net(mc, embedding_rows);
  model::TrainHooks hooks;
  hooks.on_epoch = [&log](const model::EpochRecord& e) {
    log << "epoch " << e.epoch << ": train_loss " << std::setprecision(6) << e.train_loss
        << " val_loss " << e.val_loss << " val_f1 " << e.val_f1 << (e.improved ? " *" : "") << '\n';
  };
  hooks.warn = [&log](std::string_view msg) { log << "warning: " << msg << '\n'; };
  auto result = model::train(net, prep.train, prep.val, prep.bank, tc, configured_threads(), hooks);
  return {result.params.template cast<double>(), result.history};
}

template <typename T>
std::vector<model::Prediction<double>> predict_with(const model::ModelConfig& mc,
                                                    const model::ParamSet<double>& params,
                                                    std::span<const model::Window> windows,
                                                    const model::InputBank& bank) {
  const auto embedding_rows = params.layout().embedding()
                                  ? static_cast<std::size_t>(params.layout().tensors()[*params.layout().embedding()].rows)
                                  : 0;
  const model::TransformerClassifier<T> net(mc, embedding_rows);
  const auto typed = params.template cast<T>();
  std::vector<model::Prediction<double>> out;
  for (const auto& p : net.predict(windows, bank, typed, configured_threads())) {
    out.push_back({static_cast<double>(p.p_normal), static_cast<double>(p.p_anomalous),
                   {static_cast<double>(p.logits[0]), static_cast<double>(p.logits[1])}});
  }
  return out;
}

int cmd_train(RunConfig c, std::ostream& log) {
  const auto dir = require_out(c);
  Manifest manifest("train", c);
  validate(c);
  auto loaded = load_inputs(c, manifest);
  const auto& seqs = loaded.seqs;
  c.model.seq_len = c.pipeline.grouping == pipeline::Grouping::Window ? c.pipeline.window.length
                                                                      : pipeline::longest_sequence(seqs);
  c.train.seed = c.seed;
  validate(c);

  std::optional<wordpiece::SubwordVocab> given_vocab;
  if (!c.vocab.empty()) {
    given_vocab = wordpiece::SubwordVocab::load(c.vocab);
    manifest.input("vocab", c.vocab);
  }
  pipeline::PrepareOptions opts;
  opts.dim = c.model.dim;
  opts.seq_len = c.model.seq_len;
  opts.table = loaded.table ? &*loaded.table : nullptr;
  opts.vocab = given_vocab ? &*given_vocab : nullptr;
  if (loaded.table && loaded.table->dim() != c.model.dim) {
    throw UsageError("embedding table dim " + std::to_string(loaded.table->dim()) + " differs from --dim " +
                     std::to_string(c.model.dim));
  }
  const auto prep = pipeline::prepare(seqs, c.pipeline, opts);
  log << "train: " << seqs.records.size() << " records, " << prep.train.size() << " training, "
      << prep.val.size() << " validation, " << prep.test.size() << " test sequences\n";
  if (seqs.dropped > 0) log << "train: " << seqs.dropped << " records carry no session id\n";
  if (prep.table_misses > 0) log << "train: " << prep.table_misses << " messages missing from the table\n";
  if (prep.truncated > 0) log << "train: " << prep.truncated << " sequences truncated\n";

  std::uint64_t vocab_hash = 0;
  std::size_t embedding_rows = 0;
  if (prep.vocab && prep.bank.any_trainable()) {
    prep.vocab->save(dir / "vocab.txt");
    vocab_hash = fnv1a64_file(dir / "vocab.txt");
    embedding_rows = prep.vocab->size();
    manifest.output(dir / "vocab.txt");
  }

  auto [params, history] = c.precision == "f32"
                               ? fit<float>(c.model, embedding_rows, prep, c.train, log)
                               : fit<double>(c.model, embedding_rows, prep, c.train, log);
  model::save_checkpoint(dir / "model.nlck", c.model, vocab_hash, params);
  manifest.output(dir / "model.nlck");

  const auto preds = c.precision == "f32" ? predict_with<float>(c.model, params, prep.test, prep.bank)
                                          : predict_with<double>(c.model, params, prep.test, prep.bank);
  std::vector<Label> predicted;
  std::vector<Label> truth;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    predicted.push_back(model::decide(preds[i].p_anomalous, c.threshold));
    truth.push_back(prep.test[i].label);
  }
  const auto counts = eval::confusion(predicted, truth);
  const auto m = eval::precision_recall_f1(counts);

  json model_json;
  model_json["config"] = to_json(c)["model"];
  model_json["train"] = to_json(c)["train"];
  model_json["seed"] = c.seed;
  model_json["precision"] = c.precision;
  model_json["vocab_hash"] = to_hex(vocab_hash);
  model_json["embedding_rows"] = embedding_rows;
  model_json["history"] = history_json(history);
  model_json["test"] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                        {"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}, {"tn", counts.tn}};
  write_json_file(dir / "model.json", model_json);
  write_json_file(dir / "config.json", to_json(c));
  manifest.output(dir / "model.json");
  manifest.output(dir / "config.json");
  manifest.write(dir);
  log << "train: best epoch " << history.best_epoch << " (" << history.stop_reason << "), test precision "
      << m.precision << " recall " << m.recall << " f1 " << m.f1 << '\n';
  return kOk;
}

void write_predictions(const fs::path& path, std::span<const model::Window> windows,
                       std::span<const model::Prediction<double>> preds, double threshold,
                       const pipeline::Sequences& seqs, std::span<const LogSequence> sequences) {
  auto out = open_out(path);
  out << "window\tfirst_line\tlast_line\tlabel\tp_anomalous\tpredicted\n";
  out << std::setprecision(9);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const auto& members = sequences[i].members;
    out << i << '\t' << seqs.records[members.front()].line_no << '\t'
        << seqs.records[members.back()].line_no << '\t'
        << static_cast<int>(windows[i].label) << '\t' << preds[i].p_anomalous << '\t'
        << static_cast<int>(model::decide(preds[i].p_anomalous, threshold)) << '\n';
  }
}

int cmd_detect(const fs::path& model_dir, const std::string& part,
               const Overlay& overlay, const std::string& config_file, std::ostream& log) {
  if (model_dir.empty()) throw UsageError("--model is required");
  RunConfig c;
  apply_json(c, read_json_file(model_dir / "config.json"));
  c.out.clear();  // never write into the model directory by default
  if (!config_file.empty()) apply_json(c, read_json_file(config_file));
  overlay.apply(c);
  validate(c);
  const auto dir = require_out(c);
  if (part != "test" && part != "all") throw UsageError("--part must be test or all");

  Manifest manifest("detect", c);
  manifest.input("checkpoint", model_dir / "model.nlck");
  const auto ck = model::load_checkpoint(model_dir / "model.nlck");
  std::optional<wordpiece::SubwordVocab> vocab;
  if (ck.vocab_hash != 0) {
    const auto vocab_path = model_dir / "vocab.txt";
    if (fnv1a64_file(vocab_path) != ck.vocab_hash) {
      throw DataError("vocabulary " + vocab_path.string() + " does not match the checkpoint");
    }
    vocab = wordpiece::SubwordVocab::load(vocab_path);
    manifest.input("vocab", vocab_path);
  }
  auto loaded = load_inputs(c, manifest);
  pipeline::PrepareOptions opts;
  opts.dim = ck.config.dim;
  opts.seq_len = ck.config.seq_len;
  opts.table = loaded.table ? &*loaded.table : nullptr;
  opts.vocab = vocab ? &*vocab : nullptr;
  const auto prep = pipeline::prepare(loaded.seqs, c.pipeline, opts);
  if (prep.bank.any_trainable() && !ck.params.layout().embedding()) {
    throw DataError("the checkpoint has no subword embedding but the inputs need one");
  }

  std::vector<model::Window> windows;
  std::vector<LogSequence> sequences;
  if (part == "all") {
    windows.insert(windows.end(), prep.train.begin(), prep.train.end());
    windows.insert(windows.end(), prep.val.begin(), prep.val.end());
    sequences = loaded.seqs.train;
  }
  windows.insert(windows.end(), prep.test.begin(), prep.test.end());
  sequences.insert(sequences.end(), loaded.seqs.test.begin(), loaded.seqs.test.end());

  const auto preds = c.precision == "f32" ? predict_with<float>(ck.config, ck.params, windows, prep.bank)
                                          : predict_with<double>(ck.config, ck.params, windows, prep.bank);
  write_predictions(dir / "predictions.tsv", windows, preds, c.threshold, loaded.seqs, sequences);
  manifest.output(dir / "predictions.tsv");
  manifest.write(dir);
  std::size_t flagged = 0;
  for (const auto& p : preds) flagged += model::decide(p.p_anomalous, c.threshold) == Label::Anomalous;
  log << "detect: " << windows.size() << " sequences, " << flagged << " flagged anomalous\n";
  return kOk;
}

// Reads the label and predicted columns of a predictions file.
std::pair<std::vector<Label>, std::vector<Label>> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty predictions file " + path.string());
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    for (std::string f; std::getline(h, f, '\t');) header.push_back(f);
  }
  const auto col = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("predictions file lacks a '" + name + "' column", 1);
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto label_col = col("label");
  const auto pred_col = col("predicted");
  std::vector<Label> predicted;
  std::vector<Label> truth;
  std::size_t line_no = 1;
  auto parse_label = [&](const std::string& s) {
    if (s == "0") return Label::Normal;
    if (s == "1") return Label::Anomalous;
    throw DataError("label must be 0 or 1, got '" + s + "'", line_no);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream s(line);
    for (std::string f; std::getline(s, f, '\t');) fields.push_back(f);
    if (fields.size() != header.size()) throw DataError("wrong number of columns", line_no);
    truth.push_back(parse_label(fields[label_col]));
    predicted.push_back(parse_label(fields[pred_col]));
  }
  return {predicted, truth};
}

struct EvaluateArgs {
  std::vector<std::string> predictions;
  std::string name;
  std::string mode_label;
  std::string baseline;
};

int cmd_evaluate(const RunConfig& c, const EvaluateArgs& a, std::ostream& log) {
  const auto dir = require_out(c);
  Manifest manifest("evaluate", c);
  std::vector<eval::ReportRow> rows;
  const std::string dataset_name =
      !a.name.empty() ? a.name : (!c.dataset.empty() ? c.dataset.stem().string() : std::string("dataset"));
  for (const auto& p : a.predictions) {
    const auto [predicted, truth] = read_predictions(p);
    manifest.input("predictions:" + p, p);
    rows.push_back({dataset_name, a.mode_label.empty() ? std::string(pipeline::to_string(c.pipeline.mode)) : a.mode_label,
                    eval::confusion(predicted, truth)});
  }
  if (!a.baseline.empty()) {
    if (a.baseline != "lr") throw UsageError("unknown baseline '" + a.baseline + "' (expected lr)");
    validate(c);
    auto loaded = load_inputs(c, manifest);
    const auto& seqs = loaded.seqs;
    const auto parse = parsers::drain_parse(seqs.records, c.pipeline.drain);
    const auto x_train = pipeline::count_vectors(seqs.train, seqs, parse);
    const auto x_test = pipeline::count_vectors(seqs.test, seqs, parse);
    std::vector<Label> y_train;
    std::vector<Label> truth;
    for (const auto& s : seqs.train) y_train.push_back(s.label);
    for (const auto& s : seqs.test) truth.push_back(s.label);
    const auto lr = eval::lr_train(x_train, y_train);
    std::vector<Label> predicted;
    for (const auto& x : x_test) predicted.push_back(eval::lr_predict(lr, x));
    rows.push_back({dataset_name, "lr", eval::confusion(predicted, truth)});
  }
  if (rows.empty()) throw UsageError("nothing to evaluate: pass --predictions and/or --baseline lr");
  {
    auto out = open_out(dir / "evaluation.tsv");
    eval::write_report_tsv(out, rows);
  }
  eval::write_report_tsv(log, rows);
  manifest.output(dir / "evaluation.tsv");
  manifest.write(dir);
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& log) {
  CLI::App app{"Log anomaly detection from raw messages with a transformer classifier", "neurallog"};
  app.require_subcommand(1);
  std::string config_file;

  auto* adapt = app.add_subcommand("adapt", "convert a native log file into the normalized TSV");
  auto* study = app.add_subcommand("study", "OOV and template-quality reports");
  auto* parse = app.add_subcommand("parse", "mine templates with Drain or Spell");
  auto* train = app.add_subcommand("train", "train a vocabulary and a classifier");
  auto* detect = app.add_subcommand("detect", "classify sequences with a trained model");
  auto* evaluate = app.add_subcommand("evaluate", "precision, recall and F1 reports");

  std::map<CLI::App*, Overlay> overlays;
  for (auto* sub : {adapt, study, parse, train, detect, evaluate}) {
    sub->add_option("--config", config_file, "JSON config file; flags override it");
    add_common(overlays[sub], sub);
  }
  overlays[adapt].option<std::string>(adapt, "--adapter", "bgl or generic",
                                      [](RunConfig& c, const std::string& v) { c.adapter = v; });
  add_pipeline(overlays[train], train);
  add_model(overlays[train], train);
  add_pipeline(overlays[evaluate], evaluate);
  add_detect(overlays[detect], detect);
  for (auto* sub : {study, parse}) {
    overlays[sub].option<int>(sub, "--drain-depth", "Drain tree depth",
                              [](RunConfig& c, int v) { c.pipeline.drain.depth = v; });
    overlays[sub].option<double>(sub, "--drain-sim", "Drain similarity threshold",
                                 [](RunConfig& c, double v) { c.pipeline.drain.similarity_threshold = v; });
  }

  StudyArgs study_args;
  study->add_option("--split-fracs", study_args.fracs, "training fractions to sweep")->delimiter(',');
  study->add_option("--parser", study_args.parser, "drain, spell or none");
  study->add_option("--templates", study_args.templates, "external templates CSV");
  study->add_option("--assignment", study_args.assignment, "external assignment CSV");
  study->add_option("--gt-templates", study_args.gt_templates, "ground-truth templates CSV");
  study->add_option("--tau", study_args.tau, "Spell LCS threshold");

  std::string parser_name = "drain";
  double parse_tau = 0.5;
  parse->add_option("--parser", parser_name, "drain or spell");
  parse->add_option("--tau", parse_tau, "Spell LCS threshold");

  std::string model_dir;
  std::string part = "test";
  detect->add_option("--model", model_dir, "directory written by train")->required();
  detect->add_option("--part", part, "test or all");

  EvaluateArgs eval_args;
  evaluate->add_option("--predictions", eval_args.predictions, "predictions TSV (repeatable)");
  evaluate->add_option("--name", eval_args.name, "dataset column in the report");
  evaluate->add_option("--mode-label", eval_args.mode_label, "mode column in the report");
  evaluate->add_option("--baseline", eval_args.baseline, "also train and score a baseline (lr)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = app.exit(e, out, err);
    log << out.str() << err.str();
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (sub == detect) return cmd_detect(model_dir, part, overlays[detect], config_file, log);
    RunConfig c;
    if (!config_file.empty()) apply_json(c, read_json_file(config_file));
    overlays[sub].apply(c);
    if (sub == adapt) return cmd_adapt(c, log);
    if (sub == study) return cmd_study(c, study_args, log);
    if (sub == parse) return cmd_parse(c, parser_name, parse_tau, log);
    if (sub == train) return cmd_train(c, log);
    return cmd_evaluate(c, eval_args, log);
  } catch (const UsageError& e) {
    log << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    log << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::invalid_argument& e) {
    log << "error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    log << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace neurallog::cli
