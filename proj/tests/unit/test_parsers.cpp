#include <doctest.h>

#include <filesystem>
#include <functional>
#include <map>

#include "neurallog/core.hpp"
#include "neurallog/parsers.hpp"
#include "neurallog/random.hpp"

using namespace neurallog;
using namespace neurallog::parsers;

namespace {

std::vector<RawLogRecord> lines(std::vector<std::string> contents) {
  std::vector<RawLogRecord> out;
  for (std::size_t i = 0; i < contents.size(); ++i) {
    RawLogRecord r;
    r.line_no = i + 1;
    r.content = contents[i];
    out.push_back(r);
  }
  return out;
}

// Plain recursion with memo, indices into the two sequences.
std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto it = memo.find({i, j});
    if (it != memo.end()) return it->second;
    std::size_t best = std::max(go(i + 1, j), go(i, j + 1));
    if (a[i] != "<*>" && a[i] == b[j]) best = std::max(best, 1 + go(i + 1, j + 1));
    return memo[{i, j}] = best;
  };
  return go(0, 0);
}

}  // namespace

TEST_SUITE("parsers") {
  TEST_CASE("Drain merges the served-block lines") {
    const auto r = drain_parse(lines({
        "10.251.73.220:50010 Served block blk_-7724713468912166542 to /10.251.73.220",
        "10.251.111.130:50010 Served block blk_8291449241650212794 to /10.251.111.130",
    }));
    REQUIRE(r.templates.size() == 1);
    CHECK(r.templates[0].render() == "<*> Served block <*> to <*>");
    CHECK(r.templates[0].support == 2);
  }

  TEST_CASE("Drain send bytes") {
    const auto r = drain_parse(lines({"send 5 bytes", "send 9 bytes"}));
    REQUIRE(r.templates.size() == 1);
    CHECK(r.templates[0].render() == "send <*> bytes");
  }

  TEST_CASE("Drain identical messages") {
    const auto r = drain_parse(lines(std::vector<std::string>(7, "connection closed by peer")));
    REQUIRE(r.templates.size() == 1);
    CHECK(r.templates[0].support == 7);
    CHECK(r.templates[0].keyword_count() == 4);
  }

  TEST_CASE("Drain separates by length and below threshold") {
    const auto r = drain_parse(lines({"a b c d e", "a b c", "a x y z w"}), {4, 0.5, 100});
    CHECK(r.templates.size() == 3);
    CHECK(r.assignment.at(1) != r.assignment.at(3));
  }

  TEST_CASE("Drain invariants") {
    Rng rng(3);
    const std::vector<std::string> words = {"open", "close", "read", "file", "node", "7", "x1", "ok"};
    std::vector<std::string> contents;
    for (int i = 0; i < 300; ++i) {
      std::string c;
      const std::size_t n = 2 + rng.below(5);
      for (std::size_t k = 0; k < n; ++k) c += (k ? " " : "") + words[rng.below(words.size())];
      contents.push_back(c);
    }
    const auto recs = lines(contents);
    const auto a = drain_parse(recs, {4, 0.4, 3});
    const auto b = drain_parse(recs, {4, 0.4, 3});
    std::size_t total = 0;
    for (std::size_t i = 0; i < a.templates.size(); ++i) {
      CHECK(a.templates[i].id == i);
      CHECK(a.templates[i].render() == b.templates[i].render());
      total += a.templates[i].support;
    }
    CHECK(total == recs.size());
    CHECK(a.assignment == b.assignment);
    for (const auto& r : recs) {
      CHECK(a.templates[a.assignment.at(r.line_no)].tokens.size() == split_whitespace(r.content).size());
    }
    CHECK_THROWS_AS(drain_parse(recs, {4, 1.0, 100}), std::invalid_argument);
  }

  TEST_CASE("Spell merges on the common subsequence") {
    const auto r = spell_parse(lines({"attempting task abort sc", "task abort SUCCESS sc"}));
    REQUIRE(r.templates.size() == 1);
    CHECK(r.templates[0].render() == "<*> task abort <*> sc");
    CHECK(r.templates[0].support == 2);
  }

  TEST_CASE("Spell first message verbatim, identical messages") {
    SpellParser p;
    CHECK(p.add(1, "job 12 started") == 0);
    CHECK(p.result().templates[0].render() == "job 12 started");
    p.add(2, "job 12 started");
    CHECK(p.result().templates[0].support == 2);
    CHECK(p.result().templates[0].keyword_count() == 3);
    CHECK(p.add(3, "disk full") == 1);
  }

  TEST_CASE("lcs_length against recursion") {
    Rng rng(8);
    const std::vector<std::string> alphabet = {"a", "b", "c", "<*>"};
    for (int t = 0; t < 300; ++t) {
      std::vector<std::string> x, y;
      for (std::size_t k = rng.below(8); k > 0; --k) x.push_back(alphabet[rng.below(4)]);
      for (std::size_t k = rng.below(8); k > 0; --k) y.push_back(alphabet[rng.below(3)]);
      CHECK(lcs_length(x, y) == lcs_oracle(x, y));
    }
  }

  TEST_CASE("ground-truth matching") {
    const std::vector<Template> gt = {Template::from_rendered(0, "floating point <*> <*>"),
                                      Template::from_rendered(1, "machine check <*>")};
    CHECK(match_to_ground_truth("machine check enable", gt) == 1);
    const std::vector<std::string> msg = {"machine", "check", "enable"};
    CHECK(template_similarity(gt[1], msg) == doctest::Approx(1.0));
    CHECK(template_similarity(gt[0], msg) == doctest::Approx(0.25));
    const std::vector<Template> exact = {Template::from_rendered(0, "a b"), Template::from_rendered(1, "a b c")};
    CHECK(match_to_ground_truth("a b c", exact) == 1);
    const std::vector<Template> tie = {Template::from_rendered(0, "x <*>"), Template::from_rendered(1, "<*> y")};
    CHECK(match_to_ground_truth("x y", tie) == 0);
    CHECK_THROWS_AS(match_to_ground_truth("a", std::vector<Template>{}), std::invalid_argument);
  }

  TEST_CASE("count vectors") {
    const auto recs = lines({"a", "b", "c", "d", "e", "f"});
    const std::map<std::size_t, TemplateId> assign = {{1, 2}, {2, 2}, {3, 2}, {4, 0}, {5, 3}, {6, 0}};
    LogSequence three;
    three.members = {0, 1, 2};
    CHECK(seq_to_count_vector(three, recs, assign, 4) == std::vector<std::uint32_t>{0, 0, 3, 0});
    LogSequence mixed;
    mixed.members = {0, 1, 2, 3, 4, 5};
    CHECK(seq_to_count_vector(mixed, recs, assign, 4) == std::vector<std::uint32_t>{2, 0, 3, 1});
    CHECK(seq_to_count_vector(LogSequence{}, recs, assign, 4) == std::vector<std::uint32_t>(4, 0));
    auto partial = assign;
    partial.erase(5);
    try {
      seq_to_count_vector(mixed, recs, partial, 4);
      FAIL("no throw");
    } catch (const DataError& e) {
      CHECK(e.line() == 5u);
    }
  }

  TEST_CASE("template rendering") {
    const auto t = Template::from_rendered(4, "<*> Served block <*>", 3);
    CHECK(t.tokens.size() == 4);
    CHECK(t.tokens[0].wildcard);
    CHECK(t.keywords() == std::vector<std::string>{"Served", "block"});
    CHECK(t.render() == "<*> Served block <*>");
  }

  TEST_CASE("CSV interchange round trip") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto tp = dir / "neurallog_templates.csv";
    const auto ap = dir / "neurallog_assignment.csv";
    const std::vector<Template> templates = {Template::from_rendered(0, "a, \"quoted\" <*>", 2),
                                             Template::from_rendered(1, "b", 1)};
    write_templates_csv(tp, templates);
    write_assignment_csv(ap, {{1, 0}, {2, 1}, {5, 0}});
    const auto back = read_parse_result(tp, ap);
    REQUIRE(back.templates.size() == 2);
    CHECK(back.templates[0].render() == "a, \"quoted\" <*>");
    CHECK(back.templates[0].support == 2);
    CHECK(back.assignment.at(5) == 0);
    CHECK(split_csv_line("1,\"x,y\",\"say \"\"hi\"\"\"") == std::vector<std::string>{"1", "x,y", "say \"hi\""});
    std::filesystem::remove(tp);
    std::filesystem::remove(ap);
  }
}
