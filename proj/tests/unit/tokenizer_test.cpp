#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "nl2lf/corpus.hpp"
#include "nl2lf/errors.hpp"
#include "nl2lf/random.hpp"
#include "nl2lf/tokenizer.hpp"

using namespace nl2lf;
using namespace nl2lf::tokenizer;

namespace {

std::string piece_text(const Vocabulary& v, TokenId id) { return v.pieces()[static_cast<std::size_t>(id)]; }

const Vocabulary& corpus_vocab() {
  static const Vocabulary v = [] {
    const auto data = corpus::load_nl2lf(nl2lf::testing::data_dir() / "nl2lf_synthetic.jsonl");
    return train_bpe(nl2lf::testing::texts_of(data), 600);
  }();
  return v;
}

}  // namespace

TEST_SUITE("tokenizer") {
  TEST_CASE("hand-run BPE on \"aaaa\"") {
    const std::vector<std::string> corpus = {"aaaa"};
    const auto v = train_bpe(corpus, 261);
    // (a,a) occurs three times; after merging, (aa,aa) occurs once, so BPE stops.
    REQUIRE(v.merges().size() == 1);
    CHECK(piece_text(v, v.merges()[0].first) == "a");
    CHECK(piece_text(v, v.merges()[0].second) == "a");
    CHECK(v.pieces().back() == "aa");
    CHECK(v.size() == 260);
    CHECK(v.encode("aaaa").ids == std::vector<TokenId>{259, 259});
  }

  TEST_CASE("ties go to the lexicographically smaller pair") {
    const std::vector<std::string> corpus = {"abab cdcd"};
    const auto v = train_bpe(corpus, 300);
    REQUIRE(v.merges().size() == 2);
    CHECK(v.pieces()[259] == "ab");
    CHECK(v.pieces()[260] == "cd");
  }

  TEST_CASE("vocab_size 259 is byte-level only; smaller sizes and empty corpora fail") {
    const std::vector<std::string> corpus = {"hello hello hello"};
    const auto v = train_bpe(corpus, 259);
    CHECK(v.merges().empty());
    CHECK(v.size() == 259);
    CHECK_THROWS(train_bpe(corpus, 258));
    CHECK_THROWS(train_bpe(std::vector<std::string>{}, 300));
  }

  TEST_CASE("specials and byte ids are fixed") {
    const Vocabulary v;
    CHECK(v.size() == kBaseSize);
    CHECK(v.encode("A").ids == std::vector<TokenId>{kFirstByte + 'A'});
    CHECK(corpus_vocab().pieces()[kFirstByte + 'z'] == "z");
  }

  TEST_CASE("training is deterministic and pieces are unique") {
    const auto data = corpus::load_nl2lf(nl2lf::testing::data_dir() / "nl2lf_synthetic.jsonl");
    const auto a = train_bpe(nl2lf::testing::texts_of(data), 600);
    const auto b = train_bpe(nl2lf::testing::texts_of(data), 600);
    CHECK(a == b);
    CHECK(a.hash() == b.hash());
    CHECK(a.size() <= 600);
    std::set<std::string> unique(a.pieces().begin() + kFirstByte, a.pieces().end());
    CHECK(unique.size() == a.size() - kFirstByte);
  }

  TEST_CASE("encode/decode basics") {
    const auto& v = corpus_vocab();
    CHECK(v.decode(v.encode("def f(x):").ids) == "def f(x):");
    const std::vector<TokenId> eos = {kEos};
    CHECK(v.decode(eos).empty());
    CHECK(v.encode("", kNoLimit, true).ids == eos);
    const std::vector<TokenId> with_pad = {kPad, kFirstByte + 'a', kEos, kPad};
    CHECK(v.decode(with_pad) == "a");
  }

  TEST_CASE("truncation to 32 records the original length") {
    const auto& v = corpus_vocab();
    std::string text;
    for (int i = 0; i < 40; ++i) text += "zq" + std::to_string(i) + "! ";
    const auto seq = v.encode(text, 32, true);
    CHECK(seq.ids.size() == 32);
    CHECK(seq.original_length > 32);
    CHECK(seq.ids.back() != kEos);
    const auto short_seq = v.encode("x", 32, true);
    CHECK(short_seq.ids.back() == kEos);
    CHECK(short_seq.original_length == short_seq.ids.size());
  }

  TEST_CASE("truncation is monotone") {
    const auto& v = corpus_vocab();
    const std::string text = "label spam if the text mentions free offers and prizes";
    const auto full = v.encode(text).ids;
    for (std::size_t len = 1; len <= full.size(); ++len) {
      const auto part = v.encode(text, len).ids;
      CHECK(std::equal(part.begin(), part.end(), full.begin()));
    }
  }

  TEST_CASE("decode names the offending position") {
    const auto& v = corpus_vocab();
    const std::vector<TokenId> bad = {kFirstByte, static_cast<TokenId>(v.size()) + 5};
    CHECK_THROWS_WITH_AS(v.decode(bad), doctest::Contains("position 1"), ParameterError);
  }

  TEST_CASE("round trip on 1000 random lines") {
    const auto& v = corpus_vocab();
    const auto data = corpus::load_nl2lf(nl2lf::testing::data_dir() / "nl2lf_synthetic.jsonl");
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
      std::string line;
      if (i % 2 == 0) {
        // Spliced corpus fragments exercise the learned merges.
        const auto& ex = data[rng.uniform_index(data.size())];
        const auto& src = rng.uniform_index(2) ? ex.intent : ex.snippet;
        const auto from = rng.uniform_index(src.size());
        line = src.substr(from) + " " + data[rng.uniform_index(data.size())].intent;
      } else {
        // Arbitrary bytes, including invalid UTF-8 and control characters.
        const auto len = rng.uniform_index(40);
        for (std::uint64_t k = 0; k < len; ++k) line.push_back(static_cast<char>(rng.uniform_index(256)));
      }
      CHECK(v.decode(v.encode(line).ids) == line);
    }
  }

  TEST_CASE("vocabulary file round trip") {
    nl2lf::testing::TempDir dir("vocab");
    const auto& v = corpus_vocab();
    v.save(dir / "v.json");
    const auto back = Vocabulary::load(dir / "v.json");
    CHECK(back == v);
    CHECK(back.hash() == v.hash());
    const auto doc = v.to_json();
    CHECK(doc.contains("pieces"));
    CHECK(doc.contains("merges"));
    CHECK(doc.contains("specials"));
    CHECK(doc.at("vocab_size") == v.size());
    CHECK(Vocabulary::from_json(doc) == v);
  }

  TEST_CASE("escaped display form round trips every byte") {
    for (int b = 0; b < 256; ++b) {
      const std::string s(1, static_cast<char>(b));
      CHECK(unescape_piece(escape_piece(s)) == s);
    }
    CHECK(escape_piece("\n") == "\\x0A");
    CHECK(escape_piece("ab") == "ab");
  }

  TEST_CASE("pre-tokenizer attaches one space to the following run") {
    const auto parts = pre_tokenize("x  = foo(a)\n    return");
    const std::vector<std::string_view> expected = {"x", " ", " =", " foo", "(", "a", ")", "\n", "   ", " return"};
    CHECK(parts == expected);
  }
}
