#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "salsum/corpus.hpp"
#include "salsum/labeling.hpp"
#include "salsum/oracles.hpp"

using namespace salsum;

TEST_CASE("tokenize splits punctuation and sentences") {
  auto seq = tokenize("The cat. It sat.");
  CHECK(seq.surfaces ==
        std::vector<std::string>{"the", "cat", ".", "it", "sat", "."});
  REQUIRE(seq.sentences.size() == 2);
  CHECK(seq.sentences[0] == std::pair<int64_t, int64_t>{0, 3});
  CHECK(seq.sentences[1] == std::pair<int64_t, int64_t>{3, 6});
}

TEST_CASE("tokenize of empty text") {
  auto seq = tokenize("");
  CHECK(seq.empty());
  CHECK(seq.sentences.empty());
}

TEST_CASE("tokenize round-trips at the token level") {
  const std::string text = "A quick, brown fox! Jumped over 2 dogs? Yes.";
  auto once = tokenize(text);
  auto twice = tokenize(detokenize(once.surfaces));
  CHECK(once.surfaces == twice.surfaces);
  CHECK(once.sentences == twice.sentences);
}

TEST_CASE("abbreviation periods inside a token do not close sentences") {
  auto seq = tokenize("sum is 3.5 here.");
  CHECK(seq.sentences.size() == 1);
}

TEST_CASE("vocabulary reserves control ids and round-trips") {
  auto v = Vocabulary::from_tokens({"cat", "dog"});
  CHECK(v.size() == 7);
  CHECK(v.encode("cat") == 5);
  CHECK(v.encode("dog") == 6);
  CHECK(v.encode("bird") == Vocabulary::kUnk);
  CHECK(v.decode(5) == "cat");
  CHECK(v.decode(Vocabulary::kSep) == "<sep>");
  for (const auto& t : v.tokens()) CHECK(v.decode(v.encode(t)) == t);
}

TEST_CASE("vocabulary build orders by frequency then lexicographic") {
  auto a = tokenize("b b b a a c");
  auto v = Vocabulary::build({a});
  CHECK(v.encode("b") == 5);
  CHECK(v.encode("a") == 6);
  CHECK(v.encode("c") == 7);
}

TEST_CASE("vocabulary file round trip") {
  auto v = Vocabulary::from_tokens({"x", "y", "z"});
  const std::string path = "vocab_test.txt";
  v.save(path);
  auto loaded = Vocabulary::load(path);
  CHECK(loaded.tokens() == v.tokens());
  std::remove(path.c_str());
}

TEST_CASE("load_jsonl reads records in order and reports bad lines") {
  const std::string path = "corpus_test.jsonl";
  {
    std::ofstream out(path);
    out << R"({"source": "One two. Three.", "summary": "two"})" << "\n";
    out << R"({"source": "Second doc.", "summary": "doc"})" << "\n";
  }
  auto examples = load_jsonl(path);
  REQUIRE(examples.size() == 2);
  CHECK(examples[0].source.surfaces[0] == "one");
  CHECK(examples[1].summary.surfaces[0] == "doc");

  {
    std::ofstream out(path);
    out << R"({"source": "ok", "summary": "ok"})" << "\n";
    out << R"({"source": "no summary"})" << "\n";
  }
  CHECK_THROWS_WITH_AS(load_jsonl(path),
                       "dataset line 2: missing \"summary\" field",
                       std::runtime_error);

  {
    std::ofstream out(path);
    out << "not json\n";
  }
  CHECK_THROWS_AS(load_jsonl(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("load_jsonl accepts long multi-sentence records") {
  const std::string path = "corpus_long.jsonl";
  {
    std::ofstream out(path);
    out << R"({"source": "London was hit by rain on Tuesday. Officials said the storm caused delays. Trains were cancelled across the south. Residents were told to stay home.", "summary": "Storm caused travel delays in London."})"
        << "\n";
  }
  auto examples = load_jsonl(path);
  REQUIRE(examples.size() == 1);
  CHECK(examples[0].source.sentences.size() == 4);
  CHECK(examples[0].summary.size() > 0);
  std::remove(path.c_str());
}

TEST_CASE("truncate trims tokens and spans") {
  auto seq = tokenize("a b c. d e f.");  // 8 tokens, two sentences of 4
  auto cut = truncate(seq, 6);
  CHECK(cut.size() == 6);
  REQUIRE(cut.sentences.size() == 2);
  CHECK(cut.sentences[0] == std::pair<int64_t, int64_t>{0, 4});
  CHECK(cut.sentences[1] == std::pair<int64_t, int64_t>{4, 6});

  auto one = truncate(seq, 4);
  CHECK(one.size() == 4);
  REQUIRE(one.sentences.size() == 1);
}

TEST_CASE("synthetic summaries are ordered subsequences of the source") {
  auto corpus = synth_corpus(42, 50);
  for (const auto& ex : corpus) {
    CHECK(oracles::is_subsequence(ex.summary.surfaces, ex.source.surfaces));
    CHECK(ex.summary.size() == 5);
    REQUIRE(ex.salient_positions.has_value());
    for (size_t i = 0; i < ex.salient_positions->size(); ++i)
      CHECK(ex.source.surfaces[(*ex.salient_positions)[i]] ==
            ex.summary.surfaces[i]);
  }
}

TEST_CASE("synthetic labels are recoverable through the labeling module") {
  auto corpus = synth_corpus(7, 100);
  for (const auto& ex : corpus) {
    auto pl = pseudo_labels(ex.source, ex.summary);
    std::vector<int64_t> ones;
    for (int64_t i = 0; i < ex.source.size(); ++i)
      if (pl.labels[i]) ones.push_back(i);
    CHECK(ones == *ex.salient_positions);
  }
}

TEST_CASE("synthetic corpus is deterministic per seed") {
  const std::string p1 = "synth_a.jsonl", p2 = "synth_b.jsonl";
  save_jsonl(p1, synth_corpus(9, 20));
  save_jsonl(p2, synth_corpus(9, 20));
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
  CHECK(s1.size() > 0);

  auto different = synth_corpus(10, 20);
  auto base = synth_corpus(9, 20);
  CHECK(different[0].source.surfaces != base[0].source.surfaces);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("dataset jsonl round trip preserves tokens") {
  auto corpus = synth_corpus(3, 10);
  const std::string path = "synth_rt.jsonl";
  save_jsonl(path, corpus);
  auto loaded = load_jsonl(path);
  REQUIRE(loaded.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].source.surfaces == corpus[i].source.surfaces);
    CHECK(loaded[i].summary.surfaces == corpus[i].summary.surfaces);
    CHECK(*loaded[i].salient_positions == *corpus[i].salient_positions);
  }
  std::remove(path.c_str());
}
