#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "neurallog/core.hpp"
#include "neurallog/cli.hpp"
#include "neurallog/ingest.hpp"
#include "synthetic.hpp"

using namespace neurallog;
namespace fs = std::filesystem;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "neurallog_cli_unit";
    fs::remove_all(d);
    fs::create_directories(d);
    const auto corpus = synth::anomaly_corpus(3, 1500, 20, 100);
    ingest::write_normalized(d / "data.tsv", corpus.records);
    return d;
  }();
  return dir;
}

int run(std::vector<std::string> args, std::string* log_out = nullptr) {
  args.insert(args.begin(), "neurallog");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream log;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), log);
  if (log_out) *log_out = log.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> train_args(const fs::path& out) {
  return {"train", "--dataset", (workdir() / "data.tsv").string(), "--out", out.string(), "--dim", "16",
          "--heads", "2", "--ffn", "32", "--epochs", "2", "--patience", "2", "--vocab-size", "80",
          "--window-len", "10", "--batch-size", "32", "--seed", "5"};
}

int shell(const std::string& cmd) {
  const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes of the binary") {
    const std::string bin = NEURALLOG_CLI_PATH;
    CHECK(shell(bin + " --help") == 0);
    CHECK(shell(bin) == 1);
    CHECK(shell(bin + " train --no-such-flag") == 1);
    CHECK(shell(bin + " train --dataset /nonexistent/x.tsv --out " + (workdir() / "bad").string()) == 2);
    CHECK(shell(bin + " train --dataset " + (workdir() / "data.tsv").string() + " --out " +
                (workdir() / "bad").string() + " --mode index --provider table --embeddings x.nlemb") == 1);
  }

  TEST_CASE("train, detect twice, evaluate") {
    const auto dir = workdir();
    std::string log;
    REQUIRE(run(train_args(dir / "model"), &log) == 0);
    for (const char* f : {"vocab.txt", "model.nlck", "model.json", "config.json", "manifest.json"}) {
      CHECK(fs::exists(dir / "model" / f));
    }
    const auto info = nlohmann::json::parse(slurp(dir / "model" / "model.json"));
    CHECK(info.contains("history"));

    for (const char* out : {"det1", "det2"}) {
      REQUIRE(run({"detect", "--model", (dir / "model").string(), "--out", (dir / out).string()}) == 0);
    }
    const auto a = slurp(dir / "det1" / "predictions.tsv");
    CHECK(a == slurp(dir / "det2" / "predictions.tsv"));
    CHECK(a.rfind("window\tfirst_line\tlast_line\tlabel\tp_anomalous\tpredicted\n", 0) == 0);

    // Copy the truth into the predicted column to get a perfect file.
    std::istringstream in(a);
    std::ofstream perfect(dir / "perfect.tsv");
    std::string line;
    std::getline(in, line);
    perfect << line << '\n';
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::istringstream s(line);
      for (std::string x; std::getline(s, x, '\t');) f.push_back(x);
      perfect << f[0] << '\t' << f[1] << '\t' << f[2] << '\t' << f[3] << '\t' << f[4] << '\t' << f[3] << '\n';
    }
    perfect.close();
    REQUIRE(run({"evaluate", "--predictions", (dir / "perfect.tsv").string(), "--name", "synth", "--out",
                 (dir / "eval").string()}) == 0);
    const auto report = slurp(dir / "eval" / "evaluation.tsv");
    CHECK(report.find("synth\traw\t1.000000\t1.000000\t1.000000") != std::string::npos);

    const auto manifest = nlohmann::json::parse(slurp(dir / "det1" / "manifest.json"));
    CHECK(manifest["command"] == "detect");
    CHECK(manifest.contains("inputs"));
  }

  TEST_CASE("flags override the config file") {
    const auto dir = workdir();
    {
      std::ofstream cfg(dir / "cfg.json");
      cfg << R"({"model": {"dim": 32, "layers": 1}, "train": {"lr": 0.001}, "seed": 9})";
    }
    auto args = train_args(dir / "over");
    args.push_back("--config");
    args.push_back((dir / "cfg.json").string());
    REQUIRE(run(args) == 0);
    const auto saved = nlohmann::json::parse(slurp(dir / "over" / "config.json"));
    CHECK(saved["model"]["dim"] == 16);
    CHECK(saved["train"]["lr"] == 0.001);
    CHECK(saved["seed"] == 5);
  }

  TEST_CASE("config JSON is strict") {
    cli::RunConfig c;
    CHECK_THROWS_AS(cli::apply_json(c, nlohmann::json::parse(R"({"colour": 1})")), UsageError);
    CHECK_THROWS_AS(cli::apply_json(c, nlohmann::json::parse(R"({"model": {"dim": "big"}})")), UsageError);
    cli::apply_json(c, nlohmann::json::parse(R"({"mode": "template", "window_len": 7})"));
    CHECK(c.pipeline.mode == pipeline::Mode::Template);
    CHECK(c.pipeline.window.length == 7);
    cli::RunConfig back;
    cli::apply_json(back, cli::to_json(c));
    CHECK(cli::to_json(back) == cli::to_json(c));
  }

  TEST_CASE("study sweeps every split fraction") {
    const auto dir = workdir();
    REQUIRE(run({"study", "--dataset", (dir / "data.tsv").string(), "--out", (dir / "study").string(),
                 "--split-fracs", "0.2,0.4,0.6,0.8"}) == 0);
    const auto tsv = slurp(dir / "study" / "oov.tsv");
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 5);
    CHECK(fs::exists(dir / "study" / "ambiguous.tsv"));
  }

  TEST_CASE("parse and adapt") {
    const auto dir = workdir();
    REQUIRE(run({"parse", "--dataset", (dir / "data.tsv").string(), "--out", (dir / "parse").string()}) == 0);
    const auto templates = slurp(dir / "parse" / "templates.csv");
    CHECK(templates.rfind("id,", 0) == 0);
    {
      std::ofstream raw(dir / "raw.log");
      raw << "- 1117838570 2005.06.03 R02 2005-06-03-15.42.50.675872 R02 RAS KERNEL INFO cache parity corrected\n"
             "garbage\n";
    }
    REQUIRE(run({"adapt", "--dataset", (dir / "raw.log").string(), "--out", (dir / "adapt").string()}) == 0);
    CHECK(slurp(dir / "adapt" / "normalized.tsv") == "0\t1117838570\tINFO\tKERNEL\tcache parity corrected\n");
    CHECK(slurp(dir / "adapt" / "rejects.tsv").find("too few fields") != std::string::npos);
  }
}
