#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cli_runner.hpp"
#include "fixtures.hpp"
#include "nl2lf/eval.hpp"
#include "nl2lf/synthetic.hpp"

using namespace nl2lf;
using testing::run_cli;
using testing::TempDir;

namespace {

const char* kTinyIni = R"([tokenizer]
vocab_size = 300
[model]
d_model = 16
n_heads = 2
d_ff = 32
encoder_layers = 1
decoder_layers = 1
buckets = 8
max_distance = 16
dropout = 0.1
[train]
batch_size = 4
max_src_len = 32
max_tgt_len = 32
epochs = 2
eval_every = 2
[decode]
max_len = 12
)";

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const std::filesystem::path& path) { return nlohmann::json::parse(read_text(path)); }

// Rows of history.csv as (step, loss, tag).
struct CsvRow {
  long step;
  double loss;
  std::string tag;
};

std::vector<CsvRow> read_history(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 4);
    rows.push_back({std::stol(cells[0]), std::stod(cells[1]), cells[3]});
  }
  return rows;
}

// Small datasets and the tiny INI, written once per test directory.
struct Fixture {
  TempDir dir{"cli"};
  std::string ini = (dir / "tiny.ini").string();
  std::string nl2lf = (dir / "nl2lf.jsonl").string();
  std::string noisy = (dir / "noisy.jsonl").string();

  Fixture() {
    testing::write_file(ini, kTinyIni);
    const auto pairs = synthetic::make_nl2lf(12, 1);
    synthetic::write_nl2lf(pairs, nl2lf);
    const auto mined = synthetic::make_noisy(30, 2);
    synthetic::write_noisy(mined, noisy);
  }
  std::string at(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("data validate reports counts and maps load failures to exit 2") {
  Fixture fx;
  auto ok = run_cli({"data", "validate", "--nl2lf", (testing::data_dir() / "nl2lf_synthetic.jsonl").string()},
                    fx.dir.path());
  CHECK(ok.code == 0);
  CHECK(nlohmann::json::parse(ok.out).at("loaded") == 193);

  const std::string missing = fx.at("nope.jsonl");
  auto bad = run_cli({"data", "validate", "--nl2lf", missing}, fx.dir.path());
  CHECK(bad.code == 2);
  CHECK(bad.out.find(missing) != std::string::npos);

  CHECK(run_cli({"data", "validate"}, fx.dir.path()).code == 1);
}

TEST_CASE("usage and config mistakes exit 1 with a message") {
  Fixture fx;
  CHECK(run_cli({"train", "--no-such-flag"}, fx.dir.path()).code == 1);
  auto ratio = run_cli({"train", "--nl2lf", fx.nl2lf, "--interleave", "1-1", "--out", fx.at("r")}, fx.dir.path());
  CHECK(ratio.code == 1);
  CHECK(ratio.err.find("1-1") != std::string::npos);
  auto gen = run_cli({"generate", "--checkpoint", fx.at("x.ckpt")}, fx.dir.path());
  CHECK(gen.code == 1);
}

TEST_CASE("tokenizer train is deterministic and respects the size") {
  Fixture fx;
  for (const char* name : {"a.json", "b.json"}) {
    auto r = run_cli({"tokenizer", "train", "--nl2lf", fx.nl2lf, "--vocab-size", "280", "--out", fx.at(name)},
                     fx.dir.path());
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("size").get<int>() <= 280);
    CHECK(j.at("size").get<int>() > 259);
  }
  CHECK(read_text(fx.at("a.json")) == read_text(fx.at("b.json")));
}

TEST_CASE("train writes its artefacts and the echoed config reruns the same run") {
  Fixture fx;
  auto first = run_cli({"train", "--config", fx.ini, "--nl2lf", fx.nl2lf, "--dev-size", "2", "--seed", "4", "--lr",
                        "0.003", "--out", fx.at("a")},
                       fx.dir.path());
  REQUIRE(first.code == 0);
  for (const char* name : {"vocab.json", "config.ini", "last.ckpt", "best.ckpt", "history.csv", "metrics.json"})
    CHECK(std::filesystem::exists(fx.dir / "a" / name));
  CHECK(read_text(fx.dir / "a" / "config.ini").find("lr = 0.003") != std::string::npos);
  CHECK(nlohmann::json::parse(first.out).at("stop_reason") == "max_epochs");

  auto again = run_cli({"train", "--config", (fx.dir / "a" / "config.ini").string(), "--out", fx.at("b")},
                       fx.dir.path());
  REQUIRE(again.code == 0);
  CHECK(read_text(fx.dir / "a" / "history.csv") == read_text(fx.dir / "b" / "history.csv"));
  CHECK(read_text(fx.dir / "a" / "vocab.json") == read_text(fx.dir / "b" / "vocab.json"));
}

TEST_CASE("interleaved history tags follow the ratio") {
  Fixture fx;
  auto r = run_cli({"train", "--config", fx.ini, "--nl2lf", fx.nl2lf, "--noisy", fx.noisy, "--dev-size", "2",
                    "--interleave", "1:2", "--out", fx.at("i")},
                   fx.dir.path());
  REQUIRE(r.code == 0);
  const auto rows = read_history(fx.dir / "i" / "history.csv");
  REQUIRE(rows.size() >= 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CAPTURE(i);
    CHECK(rows[i].step == static_cast<long>(i + 1));
    CHECK(rows[i].tag == (i % 3 == 0 ? "gold" : "noisy"));
  }
}

TEST_CASE("resume from last.ckpt reproduces the uninterrupted run") {
  Fixture fx;
  const std::vector<std::string> common{"train", "--config", fx.ini, "--nl2lf", fx.nl2lf, "--noisy", fx.noisy,
                                        "--dev-size", "2", "--interleave", "1:1", "--epochs", "50"};
  auto with = [&](std::vector<std::string> extra) {
    auto args = common;
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args, fx.dir.path());
  };
  REQUIRE(with({"--max-steps", "10", "--out", fx.at("full")}).code == 0);
  REQUIRE(with({"--max-steps", "4", "--out", fx.at("part")}).code == 0);
  REQUIRE(with({"--max-steps", "10", "--resume", fx.at("part/last.ckpt"), "--out", fx.at("resumed")}).code == 0);

  const auto full = read_history(fx.dir / "full" / "history.csv");
  const auto resumed = read_history(fx.dir / "resumed" / "history.csv");
  REQUIRE(full.size() == 10);
  REQUIRE(resumed.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CAPTURE(i);
    CHECK(std::abs(full[i].loss - resumed[i].loss) <= 1e-6);
    CHECK(full[i].tag == resumed[i].tag);
  }

  auto changed = with({"--max-steps", "10", "--lr", "0.5", "--resume", fx.at("part/last.ckpt"), "--out", fx.at("x")});
  CHECK(changed.code == 2);
}

TEST_CASE("eval, generate and an overfit toy set") {
  Fixture fx;
  // Three distinct pairs, each twice, so the single dev example is also in train.
  std::vector<corpus::Example> three{
      {0, "vote ham for messages shorter than 9 words",
       "def lf_short_9(x):\n    return HAM if len(x.text.split()) < 9 else ABSTAIN"},
      {1, "label ham if the text has more than 6 exclamation marks",
       "def lf_exclaim_6(x):\n    return HAM if x.text.count(\"!\") > 6 else ABSTAIN"},
      {2, "label ham if the text has fewer than 3 words",
       "def lf_short_3(x):\n    return HAM if len(x.text.split()) < 3 else ABSTAIN"}};
  auto doubled = three;
  doubled.insert(doubled.end(), three.begin(), three.end());
  synthetic::write_nl2lf(doubled, fx.at("dup.jsonl"));
  synthetic::write_nl2lf(three, fx.at("three.jsonl"));
  testing::write_file(fx.at("intents.txt"), three[0].intent + "\n" + three[1].intent + "\n" + three[2].intent + "\n");
  testing::write_file(fx.at("fit.ini"), R"([tokenizer]
vocab_size = 300
[model]
d_model = 32
n_heads = 2
d_ff = 64
encoder_layers = 1
decoder_layers = 1
buckets = 8
max_distance = 16
dropout = 0
[train]
lr = 0.01
batch_size = 5
max_src_len = 96
max_tgt_len = 96
epochs = 150
eval_every = 1000
[decode]
max_len = 80
)");

  auto missing = run_cli({"eval", "--checkpoint", fx.at("none.ckpt"), "--nl2lf", fx.at("three.jsonl")}, fx.dir.path());
  CHECK(missing.code == 2);
  CHECK(missing.err.find("none.ckpt") != std::string::npos);

  REQUIRE(run_cli({"train", "--config", fx.at("fit.ini"), "--nl2lf", fx.at("dup.jsonl"), "--dev-size", "1", "--out",
                   fx.at("fit")},
                  fx.dir.path())
              .code == 0);
  const std::string ckpt = fx.at("fit/last.ckpt");

  auto ev = run_cli({"eval", "--checkpoint", ckpt, "--nl2lf", fx.at("three.jsonl"), "--max-len", "80", "--out",
                     fx.at("ev")},
                    fx.dir.path());
  REQUIRE(ev.code == 0);
  const auto report = eval::EvalReport::from_json(read_json(fx.dir / "ev" / "report.json"));
  CHECK(report.bleu == doctest::Approx(100.0));
  CHECK(report.accuracy == doctest::Approx(100.0));
  eval::NgramStats total;
  for (const auto& r : report.per_example) total += r.stats;
  CHECK(eval::bleu_from_stats(total) == doctest::Approx(report.bleu).epsilon(1e-12));
  CHECK(ev.err.find("bleu 100 accuracy 100 over 3 examples") != std::string::npos);
  CHECK(std::filesystem::exists(fx.dir / "ev" / "examples.csv"));

  auto gen = run_cli({"generate", "--checkpoint", ckpt, "--beam-size", "1", "--length-alpha", "0", "--max-len", "80",
                      "--input", fx.at("intents.txt")},
                     fx.dir.path());
  REQUIRE(gen.code == 0);
  std::istringstream lines(gen.out);
  std::string line;
  std::size_t i = 0;
  for (; std::getline(lines, line); ++i) {
    REQUIRE(i < 3);
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("intent") == three[i].intent);
    // Beam 1 without length normalisation is the greedy decode eval ran.
    CHECK(j.at("snippet") == report.per_example[i].hypothesis);
  }
  CHECK(i == 3);

  auto one = run_cli({"generate", "--checkpoint", ckpt, "--max-len", "80", "--intent", three[1].intent}, fx.dir.path());
  REQUIRE(one.code == 0);
  CHECK(one.out == three[1].snippet + "\n");
}

TEST_CASE("cv aggregates folds and fixes memberships by seed") {
  Fixture fx;
  auto cv = [&](const std::string& folds, const std::string& out) {
    return run_cli({"cv", "--config", fx.ini, "--nl2lf", fx.nl2lf, "--folds", folds, "--seed", "3", "--out", fx.at(out)},
                   fx.dir.path());
  };
  REQUIRE(cv("2", "a").code == 0);
  REQUIRE(cv("2", "b").code == 0);
  const auto a = read_json(fx.dir / "a" / "cv_summary.json");
  const auto b = read_json(fx.dir / "b" / "cv_summary.json");
  CHECK(a.at("fold_count") == 2);
  double bleu_sum = 0, acc_sum = 0;
  for (int f = 0; f < 2; ++f) {
    const auto fold = a.at("folds").at(f);
    CHECK(fold.at("train_ids") == b.at("folds").at(f).at("train_ids"));
    CHECK(fold.at("test_ids") == b.at("folds").at(f).at("test_ids"));
    std::set<long> train_ids(fold.at("train_ids").begin(), fold.at("train_ids").end());
    for (long id : fold.at("test_ids")) CHECK(train_ids.count(id) == 0);
    CHECK(train_ids.size() + fold.at("test_ids").size() == 12);
    const auto report = read_json(fx.dir / "a" / ("fold_" + std::to_string(f)) / "report.json");
    CHECK(report.at("bleu") == fold.at("bleu"));
    bleu_sum += report.at("bleu").get<double>();
    acc_sum += report.at("accuracy").get<double>();
  }
  CHECK(a.at("mean_bleu").get<double>() == doctest::Approx(bleu_sum / 2).epsilon(1e-12));
  CHECK(a.at("mean_accuracy").get<double>() == doctest::Approx(acc_sum / 2).epsilon(1e-12));
  CHECK(a.at("folds").at(0).at("train_ids") != a.at("folds").at(1).at("train_ids"));

  REQUIRE(cv("1", "c").code == 0);
  const auto c = read_json(fx.dir / "c" / "cv_summary.json");
  CHECK(c.at("fold_count") == 1);
  CHECK(c.at("mean_bleu") == c.at("folds").at(0).at("bleu"));
}

}  // TEST_SUITE
