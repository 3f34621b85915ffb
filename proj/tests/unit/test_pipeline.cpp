#include <doctest.h>

#include <set>

#include "neurallog/core.hpp"
#include "neurallog/pipeline.hpp"

using namespace neurallog;
using namespace neurallog::pipeline;

namespace {

std::vector<RawLogRecord> corpus(std::size_t n) {
  const char* messages[] = {"Receiving block blk_1", "Served block blk_2 to node", "Deleting block blk_3",
                            "PacketResponder terminating"};
  std::vector<RawLogRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].line_no = i + 1;
    out[i].timestamp = static_cast<std::int64_t>(i);
    out[i].verbosity = "INFO";
    out[i].component = "dfs";
    out[i].content = messages[i % 4];
    out[i].label = i % 13 == 5 ? Label::Anomalous : Label::Normal;
  }
  return out;
}

PipelineConfig window_config(std::size_t len = 5) {
  PipelineConfig c;
  c.window = {len, 1};
  c.vocab_size = 40;
  return c;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("window grouping never straddles the split") {
    auto cfg = window_config();
    const auto s = build_sequences(corpus(50), cfg);
    // 40 train records -> 36 windows, 10 test records -> 6 windows.
    CHECK(s.train.size() == 36);
    CHECK(s.test.size() == 6);
    for (const auto& w : s.train) CHECK(w.members.back() < 40);
    for (const auto& w : s.test) CHECK(w.members.front() >= 40);
    CHECK(std::get<WindowOrigin>(s.test[0].origin).start_index == 40);
    CHECK(longest_sequence(s) == 5);
  }

  TEST_CASE("records are sorted before grouping") {
    auto recs = corpus(20);
    std::reverse(recs.begin(), recs.end());
    const auto s = build_sequences(recs, window_config());
    CHECK(s.records.front().line_no == 1);
    CHECK(s.records.back().line_no == 20);
  }

  TEST_CASE("session grouping splits whole sessions") {
    auto cfg = window_config();
    cfg.grouping = Grouping::Session;
    cfg.split.train_fraction = 0.5;
    auto recs = corpus(8);
    recs[3].content = "no session here";
    const auto s = build_sequences(recs, cfg);
    CHECK(s.dropped == 2);
    CHECK(s.train.size() + s.test.size() == 3);
  }

  TEST_CASE("prepare: validation tail, dedup, vocabulary from train only") {
    auto recs = corpus(60);
    recs[55].content = "zebra quokka";
    const auto cfg = window_config();
    const auto s = build_sequences(recs, cfg);
    PrepareOptions opts;
    opts.dim = 8;
    opts.seq_len = 5;
    const auto p = prepare(s, cfg, opts);
    // 48 train records -> 44 windows; the last 10% (5) go to validation.
    CHECK(p.train.size() == 39);
    CHECK(p.val.size() == 5);
    CHECK(p.val.front().origin == 39);
    CHECK(p.test.size() == s.test.size());
    CHECK(p.bank.size() == 5);
    REQUIRE(p.vocab.has_value());
    CHECK_FALSE(p.vocab->contains("z"));
    CHECK(p.bank.any_trainable());
    for (std::size_t i = 0; i < p.train.size(); ++i) CHECK(p.train[i].label == s.train[i].label);
  }

  TEST_CASE("index mode uses one-hot template vectors") {
    auto cfg = window_config();
    cfg.mode = Mode::Index;
    const auto s = build_sequences(corpus(40), cfg);
    PrepareOptions opts;
    opts.dim = 8;
    opts.seq_len = 5;
    const auto p = prepare(s, cfg, opts);
    REQUIRE(p.parse.has_value());
    CHECK_FALSE(p.vocab.has_value());
    CHECK(p.bank.size() == p.parse->templates.size());
    for (std::uint32_t id = 0; id < p.bank.size(); ++id) {
      const auto& v = p.bank.at(id).fixed;
      double sum = 0;
      for (double x : v) sum += x;
      CHECK(sum == 1.0);
    }
    const auto cv = count_vectors(s.train, s, *p.parse);
    CHECK(cv.size() == s.train.size());
    double total = 0;
    for (double x : cv[0]) total += x;
    CHECK(total == 5);
  }

  TEST_CASE("template mode shares inputs across one template") {
    auto cfg = window_config();
    cfg.mode = Mode::Template;
    auto recs = corpus(40);
    for (std::size_t i = 0; i < recs.size(); i += 4) recs[i].content = "Receiving block blk_" + std::to_string(i);
    const auto s = build_sequences(recs, cfg);
    PrepareOptions opts;
    opts.dim = 8;
    const auto p = prepare(s, cfg, opts);
    CHECK(p.bank.size() == p.parse->templates.size());
  }

  TEST_CASE("table provider and miss policies") {
    auto cfg = window_config();
    cfg.provider = Provider::Table;
    cfg.embeddings = "unused.nlemb";
    const auto s = build_sequences(corpus(30), cfg);
    embed::EmbeddingTable table(4);
    table.insert(embed::key_hash("info dfs receiving block"), {1, 2, 3, 4});
    PrepareOptions opts;
    opts.dim = 4;
    opts.table = &table;
    try {
      prepare(s, cfg, opts);
      FAIL("no throw");
    } catch (const DataError& e) {
      CHECK(e.line() == 2u);
    }
    cfg.miss_policy = embed::MissPolicy::ZeroVector;
    const auto z = prepare(s, cfg, opts);
    CHECK(z.table_misses == 3);
    CHECK_FALSE(z.bank.any_trainable());
    CHECK(z.bank.at(0).fixed == std::vector<double>{1, 2, 3, 4});
    cfg.miss_policy = embed::MissPolicy::FallbackTrainable;
    const auto f = prepare(s, cfg, opts);
    CHECK(f.bank.any_trainable());
    CHECK(f.vocab.has_value());
    opts.dim = 5;
    CHECK_THROWS_AS(prepare(s, cfg, opts), std::invalid_argument);
  }

  TEST_CASE("long sessions are truncated to seq_len") {
    auto cfg = window_config(30);
    const auto s = build_sequences(corpus(100), cfg);
    PrepareOptions opts;
    opts.dim = 8;
    opts.seq_len = 20;
    const auto p = prepare(s, cfg, opts);
    // 80 train records give 51 windows of 30; the 20 test records make one
    // partial window that already fits.
    CHECK(s.test.size() == 1);
    CHECK(p.truncated == s.train.size());
    CHECK(p.test[0].messages.size() == 20);
    CHECK(p.train[0].messages.size() == 20);
  }

  TEST_CASE("config validation") {
    PipelineConfig c;
    c.mode = Mode::Index;
    c.provider = Provider::Table;
    c.embeddings = "x";
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.provider = Provider::Table;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.split.mode = ingest::SplitMode::RandomBySession;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.val_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = PipelineConfig{};
    c.vocab_size = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK(parse_mode("template") == Mode::Template);
    CHECK(to_string(Grouping::Session) == "session");
    CHECK_THROWS_AS(parse_provider("magic"), std::invalid_argument);
  }
}
