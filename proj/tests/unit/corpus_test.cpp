#include <doctest.h>

#include <algorithm>
#include <set>

#include "fixtures.hpp"
#include "nl2lf/corpus.hpp"
#include "nl2lf/errors.hpp"

using namespace nl2lf;
using namespace nl2lf::corpus;
using nl2lf::testing::TempDir;
using nl2lf::testing::write_file;

namespace {

std::vector<Example> numbered(std::size_t n) {
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.id = static_cast<std::int64_t>(i);
    ex.intent = "intent " + std::to_string(i);
    ex.snippet = "x = " + std::to_string(i);
    out.push_back(ex);
  }
  return out;
}

bool disjoint(const IdList& a, const IdList& b) {
  std::set<std::int64_t> sa(a.begin(), a.end());
  return std::none_of(b.begin(), b.end(), [&](auto id) { return sa.count(id) > 0; });
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("gold loader keeps file order and prefers rewritten_intent") {
    TempDir dir("gold");
    write_file(dir / "g.json", R"js([
      {"intent": "first", "rewritten_intent": "first `x`", "snippet": "x=1"},
      {"intent": "a", "rewritten_intent": null, "snippet": "b=1"},
      {"intent": "third", "snippet": "print(3)"}
    ])js");
    LoadSummary summary;
    const auto ex = load_gold(dir / "g.json", &summary);
    REQUIRE(ex.size() == 3);
    CHECK(ex[0].intent == "first `x`");
    CHECK(ex[1].intent == "a");
    CHECK(ex[1].snippet == "b=1");
    CHECK(ex[2].intent == "third");
    for (std::size_t i = 0; i < ex.size(); ++i) {
      CHECK(ex[i].id == static_cast<std::int64_t>(i));
      CHECK(ex[i].source == Source::gold);
      CHECK(ex[i].weight == 1.0);
    }
    CHECK(summary.loaded + summary.skipped == 3);
    CHECK(summary.to_json().at("source") == "gold");
  }

  TEST_CASE("gold loader errors name the path, byte offset or record index") {
    TempDir dir("gold_err");
    CHECK_THROWS_WITH_AS(load_gold(dir / "missing.json"), doctest::Contains("missing.json"), LoadError);
    write_file(dir / "bad.json", "[{\"intent\": \"a\", \"snippet\": \"b\"},\n  {oops}]");
    CHECK_THROWS_WITH_AS(load_gold(dir / "bad.json"), doctest::Contains("byte offset"), LoadError);
    write_file(dir / "nosnip.json", R"js([{"intent": "a", "snippet": "b"}, {"intent": "c"}])js");
    CHECK_THROWS_WITH_AS(load_gold(dir / "nosnip.json"), doctest::Contains("record 1"), ValidationError);
    write_file(dir / "blank.json", R"js([{"intent": "  ", "snippet": "b"}])js");
    CHECK_THROWS_AS(load_gold(dir / "blank.json"), ValidationError);
  }

  TEST_CASE("noisy loader filters by weight and counts malformed lines") {
    TempDir dir("noisy");
    write_file(dir / "n.jsonl",
               "{\"intent\": \"a\", \"snippet\": \"x\", \"prob\": 0.9}\n"
               "not json\n"
               "{\"intent\": \"b\", \"snippet\": \"y\", \"prob\": 0.2}\n"
               "{\"intent\": \"c\", \"snippet\": \"z\"}\n"
               "\n"
               "{\"intent\": \"d\", \"snippet\": \"w\", \"prob\": 1.0}\n");
    LoadSummary all;
    const auto every = load_noisy(dir / "n.jsonl", 0.0, &all);
    CHECK(every.size() == 3);
    CHECK(all.malformed == 2);
    CHECK(all.loaded + all.skipped == 5);
    CHECK(every[0].weight == doctest::Approx(0.9));
    CHECK(every[0].source == Source::noisy);
    CHECK(every[1].id != every[0].id);

    LoadSummary filtered;
    const auto high = load_noisy(dir / "n.jsonl", 0.5, &filtered);
    CHECK(high.size() == 2);
    CHECK(filtered.loaded + filtered.skipped == 5);
    CHECK(load_noisy(dir / "n.jsonl", 1.1).empty());
  }

  TEST_CASE("noisy reader streams one example at a time") {
    TempDir dir("stream");
    std::string text;
    for (int i = 0; i < 50; ++i) text += R"({"intent": "i", "snippet": "s", "prob": 0.5})" "\n";
    write_file(dir / "n.jsonl", text);
    NoisyReader reader(dir / "n.jsonl", 0.0);
    int n = 0;
    while (auto ex = reader.next()) {
      CHECK(ex->id == n);  // 0-based line number
      ++n;
    }
    CHECK(n == 50);
    CHECK(reader.summary().loaded == 50);
  }

  TEST_CASE("nl2lf loader: multi-line snippets, shared snippets, empty file") {
    TempDir dir("nl2lf");
    write_file(dir / "l.jsonl",
               "{\"intent\": \"one\", \"snippet\": \"def lf(x):\\n    return 1\"}\n"
               "{\"intent\": \"two\", \"snippet\": \"def lf(x):\\n    return 1\"}\n");
    const auto ex = load_nl2lf(dir / "l.jsonl");
    REQUIRE(ex.size() == 2);
    CHECK(ex[0].snippet == ex[1].snippet);
    CHECK(ex[0].snippet.find('\n') != std::string::npos);
    CHECK(ex[1].source == Source::nl2lf);
    write_file(dir / "empty.jsonl", "");
    CHECK(load_nl2lf(dir / "empty.jsonl").empty());
    write_file(dir / "broken.jsonl", "{\"intent\": \"one\", \"snippet\": \"x\"}\n{broken\n");
    CHECK_THROWS_WITH_AS(load_nl2lf(dir / "broken.jsonl"), doctest::Contains("byte offset"), LoadError);
  }

  TEST_CASE("bundled NL2LF file has 193 pairs") {
    LoadSummary summary;
    const auto ex = load_nl2lf(nl2lf::testing::data_dir() / "nl2lf_synthetic.jsonl", &summary);
    CHECK(ex.size() == 193);
    CHECK(summary.loaded == 193);
  }

  TEST_CASE("validate enforces the Example invariants") {
    Example ex;
    ex.intent = "a";
    ex.snippet = "b";
    CHECK_NOTHROW(validate(ex));
    ex.weight = 0.5;
    CHECK_THROWS_AS(validate(ex), ValidationError);
    ex.source = Source::noisy;
    CHECK_NOTHROW(validate(ex));
    ex.weight = 1.5;
    CHECK_THROWS_AS(validate(ex), ValidationError);
  }

  TEST_CASE("carve_dev") {
    const auto data = numbered(2379);
    SUBCASE("2379 with 200 dev gives 2179/200, disjoint, covering") {
      const auto split = carve_dev(data, 200, 7);
      CHECK(split.train.size() == 2179);
      CHECK(split.dev.size() == 200);
      CHECK(disjoint(split.train, split.dev));
      std::set<std::int64_t> all(split.train.begin(), split.train.end());
      all.insert(split.dev.begin(), split.dev.end());
      CHECK(all.size() == 2379);
    }
    SUBCASE("dev_size 0 keeps everything") {
      const auto split = carve_dev(data, 0, 7);
      CHECK(split.dev.empty());
      CHECK(split.train.size() == data.size());
    }
    SUBCASE("deterministic per seed") {
      const auto a = carve_dev(data, 50, 11), b = carve_dev(data, 50, 11), c = carve_dev(data, 50, 12);
      CHECK(a.train == b.train);
      CHECK(a.dev == b.dev);
      CHECK(a.dev != c.dev);
    }
    SUBCASE("dev_size >= N is an error") {
      CHECK_THROWS_AS(carve_dev(numbered(5), 5, 0), ParameterError);
    }
  }

  TEST_CASE("plan_folds") {
    const auto data = numbered(193);
    const auto plan = plan_folds(data, 5, 0.5, 3);
    REQUIRE(plan.folds.size() == 5);
    for (const auto& fold : plan.folds) {
      CHECK(fold.train.size() == 97);
      CHECK(fold.test.size() == 96);
      CHECK(disjoint(fold.train, fold.test));
    }
    CHECK(plan.folds[0].train != plan.folds[1].train);
    const auto again = plan_folds(data, 5, 0.5, 3);
    for (std::size_t i = 0; i < 5; ++i) CHECK(again.folds[i].train == plan.folds[i].train);
    CHECK(plan_folds(data, 1, 0.5, 3).folds.size() == 1);
    // Fold i is the plan of seed + i.
    CHECK(plan_folds(data, 1, 0.5, 5).folds[0].train == plan.folds[2].train);
    CHECK_THROWS_AS(plan_folds(data, 0, 0.5, 0), ParameterError);
    CHECK_THROWS_AS(plan_folds(data, 2, 1.0, 0), ParameterError);
    CHECK_THROWS_AS(plan_folds(data, 2, 0.0, 0), ParameterError);
  }

  TEST_CASE("select preserves the requested order") {
    const auto data = numbered(10);
    const IdList ids = {7, 2, 9};
    const auto picked = select(data, ids);
    REQUIRE(picked.size() == 3);
    CHECK(picked[0].id == 7);
    CHECK(picked[2].snippet == "x = 9");
    const IdList bad = {42};
    CHECK_THROWS_AS(select(data, bad), ParameterError);
  }
}
