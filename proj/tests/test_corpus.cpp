#include <doctest.h>

#include "mirror/corpus.hpp"
#include "mirror/toy.hpp"

#include <fstream>
#include <sstream>

using namespace mirror;

namespace {

std::vector<Dialogue> synthetic(std::size_t d, std::size_t t) {
  std::vector<Dialogue> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < t; ++j) out[i].turns.push_back({"d" + std::to_string(i), "t" + std::to_string(j)});
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, '\t')) out.push_back(field);
  return out;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("tokenize lowercases and splits punctuation") {
    CHECK(tokenize("Hello, World!") == Tokens{"hello", ",", "world", "!"});
    CHECK(tokenize("  it's   fine ") == Tokens{"it", "'", "s", "fine"});
    CHECK(tokenize("") == Tokens{});
    CHECK(tokenize("caf\xc3\xa9 ok") == Tokens{"caf\xc3\xa9", "ok"});
    CHECK(detokenize({"a", "b", "."}) == "a b .");
  }

  TEST_CASE("stride-1 windowing yields D*(T-2) triples") {
    for (std::size_t d : {1u, 4u, 9u}) {
      for (std::size_t t : {3u, 5u, 8u}) {
        WindowReport rep;
        const auto triples = window_dialogues(synthetic(d, t), 3, 1, &rep);
        CHECK(triples.size() == d * (t - 2));
        CHECK(rep.triples == triples.size());
        CHECK(rep.skipped_short == 0);
      }
    }
  }

  TEST_CASE("windowing keeps turn order inside a triple") {
    const auto triples = window_dialogues(synthetic(1, 5));
    REQUIRE(triples.size() == 3);
    CHECK(triples[1].context == std::vector<Tokens>{{"d0", "t1"}});
    CHECK(triples[1].query == Tokens{"d0", "t2"});
    CHECK(triples[1].response == Tokens{"d0", "t3"});
  }

  TEST_CASE("wider windows put more turns in the context") {
    const auto triples = window_dialogues(synthetic(2, 6), 4, 1);
    CHECK(triples.size() == 2 * 3);
    CHECK(triples[0].context.size() == 2);
    CHECK(triples[0].c_all().size() == 3);
  }

  TEST_CASE("dialogues shorter than the window are skipped and counted") {
    auto ds = synthetic(3, 4);
    ds[1].turns.resize(2);
    WindowReport rep;
    const auto triples = window_dialogues(ds, 3, 1, &rep);
    CHECK(triples.size() == 4);
    CHECK(rep.skipped_short == 1);
    CHECK(rep.dialogues == 3);
  }

  TEST_CASE("invalid window parameters are rejected") {
    CHECK_THROWS(window_dialogues(synthetic(1, 5), 2, 1));
    CHECK_THROWS(window_dialogues(synthetic(1, 5), 3, 0));
  }

  TEST_CASE("DailyDialog importer matches hand-constructed triples") {
    std::ifstream in(std::string(MIRROR_SOURCE_DIR) + "/data/toy/dailydialog_fixture.txt");
    REQUIRE(in);
    const auto dialogues = read_dailydialog(in);
    CHECK(dialogues.size() == 10);
    const auto triples = window_dialogues(dialogues);

    std::ifstream exp(std::string(MIRROR_SOURCE_DIR) + "/data/toy/dailydialog_fixture.expected.tsv");
    REQUIRE(exp);
    std::vector<Triple> expected;
    for (std::string line; std::getline(exp, line);) {
      const auto f = split_tabs(line);
      REQUIRE(f.size() == 3);
      expected.push_back({{tokenize(f[0])}, tokenize(f[1]), tokenize(f[2])});
    }
    REQUIRE(triples.size() == expected.size());
    for (std::size_t i = 0; i < triples.size(); ++i) {
      INFO("triple " << i);
      CHECK(triples[i] == expected[i]);
    }
  }

  TEST_CASE("triples TSV and JSONL round trip") {
    std::istringstream tsv("a b\tc d\te f\n");
    const auto ds = read_triples_tsv(tsv);
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].turns.size() == 3);
    std::stringstream buf;
    write_jsonl_corpus(buf, ds);
    const auto back = read_jsonl_corpus(buf);
    REQUIRE(back.size() == 1);
    CHECK(back[0].turns == ds[0].turns);
  }

  TEST_CASE("malformed JSONL is a corpus error") {
    std::istringstream bad("{\"turns\": 3}\n");
    CHECK_THROWS_AS(read_jsonl_corpus(bad), CorpusError);
  }

  TEST_CASE("vocabulary orders by frequency then lexicographically") {
    std::vector<Triple> ts = {{{{"b", "a"}}, {"c", "b"}, {"a", "d"}}};
    const auto v = build_vocabulary(ts);
    CHECK(v.size() == Vocabulary::kReserved + 4);
    CHECK(v.id("a") == 5);
    CHECK(v.id("b") == 6);
    CHECK(v.id("c") == 7);
    CHECK(v.id("d") == 8);
    CHECK(v.id("zzz") == Vocabulary::kUnk);
    const auto small = build_vocabulary(ts, 2);
    CHECK(small.size() == Vocabulary::kReserved + 2);
    CHECK(small.id("c") == Vocabulary::kUnk);
  }

  TEST_CASE("vocabulary save and load round trip") {
    const auto v = build_vocabulary(toy_triples(8));
    std::stringstream buf;
    v.save(buf);
    CHECK(Vocabulary::load(buf) == v);
    CHECK(v.decode(std::vector<int>{Vocabulary::kBos, v.id("hi"), Vocabulary::kEos, Vocabulary::kPad}) ==
          Tokens{"hi"});
  }

  TEST_CASE("context turns are joined with SEP") {
    Vocabulary v({"x", "y", "z"});
    const auto ids = flatten_context({{"x", "y"}, {"z"}}, v, 50);
    CHECK(ids == std::vector<int>{5, 6, Vocabulary::kSep, 7});
  }

  TEST_CASE("targets are truncated and then framed with BOS and EOS") {
    Vocabulary v({"x", "y", "z"});
    std::vector<Triple> ts = {{{{"x"}}, {"x", "y", "z", "x"}, {"z"}}};
    const auto b = encode_batch(ts, v, 3);
    CHECK(b.query.lengths[0] == 3);
    CHECK(b.query_target.lengths[0] == 5);
    CHECK(b.query_target.at(0, 0) == Vocabulary::kBos);
    CHECK(b.query_target.at(0, 3) == 7);
    CHECK(b.query_target.at(0, 4) == Vocabulary::kEos);
    CHECK(b.response_target.lengths[0] == 3);
    CHECK(b.vocab_size == 8);
  }

  TEST_CASE("padding masks past each row's length") {
    const auto s = pad_sequences({{5, 6, 7}, {8}});
    CHECK(s.max_len == 3);
    CHECK(s.column(1) == std::vector<int>{6, Vocabulary::kPad});
    CHECK(s.mask(1) == std::vector<double>{1.0, 0.0});
  }

  TEST_CASE("degenerate triples are rejected when batching") {
    Vocabulary v({"x"});
    std::vector<Triple> ts = {{{{"x"}}, {}, {"x"}}};
    CHECK_THROWS_AS(encode_batch(ts, v), CorpusError);
  }

  TEST_CASE("bundled toy corpora") {
    CHECK(toy_triples(32).size() == 32);
    CHECK(toy_triples(8).size() == 8);
  }
}
