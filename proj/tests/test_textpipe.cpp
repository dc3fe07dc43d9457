#include <algorithm>
#include <fstream>
#include <set>

#include <doctest.h>

#include "lenvae/textpipe.hpp"
#include "test_support.hpp"

using namespace lenvae;

TEST_CASE("normalize: basic rules") {
  CHECK(normalize("Sold 25 Cars.") == Tokens{"sold", "#", "cars", "."});
  CHECK(normalize("IBM") == Tokens{"ibm"});
  CHECK(normalize("").empty());
  CHECK(normalize("   \t ").empty());
  CHECK(normalize("a 2-year plan") == Tokens{"a", "#", "-", "year", "plan"});
  CHECK(normalize("12,345.67") == Tokens{"#"});
  CHECK(normalize("end, 5.") == Tokens{"end", ",", "#", "."});
}

TEST_CASE("normalize: golden file") {
  std::ifstream in(std::string(LENVAE_TEST_DATA) + "/normalize_golden.txt");
  REQUIRE(in.good());
  std::string line;
  std::size_t cases = 0;
  while (std::getline(in, line)) {
    // input ||| expected tokens
    const auto sep = line.find(" ||| ");
    REQUIRE(sep != std::string::npos);
    CAPTURE(line);
    CHECK(join_tokens(normalize(line.substr(0, sep))) == line.substr(sep + 5));
    ++cases;
  }
  CHECK(cases >= 10);
}

TEST_CASE("build_vocab") {
  SUBCASE("frequency order") {
    const Vocabulary v = build_vocab({{"a", "a", "b"}}, 1);
    CHECK(v.size() == special::kCount + 1);
    CHECK(v.contains("a"));
    CHECK(v.id("b") == special::kUnk);
  }
  SUBCASE("lexicographic tie-break") {
    const Vocabulary v = build_vocab({{"b", "a", "b", "a"}}, 1);
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
  }
  SUBCASE("reserved ids") {
    const Vocabulary v = build_vocab({{"x", "#"}}, 10);
    CHECK(v.token(special::kPad) == "<pad>");
    CHECK(v.token(special::kUnk) == "<unk>");
    CHECK(v.token(special::kBos) == "<s>");
    CHECK(v.token(special::kEos) == "</s>");
    CHECK(v.id("#") == special::kNum);
    CHECK(v.size() == special::kCount + 1);
    for (TokenId id = 0; id < static_cast<TokenId>(v.size()); ++id) CHECK(v.id(v.token(id)) == id);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_vocab({}, 5), Error);
    CHECK_THROWS_AS(build_vocab({{"a"}}, 0), Error);
    CHECK_THROWS_AS(Vocabulary(std::vector<std::string>{"a", "b"}), Error);
  }
}

TEST_CASE("vocabulary serialization round trip") {
  const Vocabulary v = build_vocab({normalize("the cat sat on the mat, the end.")}, 100);
  const auto dir = testing::temp_dir("vocab");
  v.save(dir / "vocab.txt");
  const Vocabulary w = Vocabulary::load(dir / "vocab.txt");
  CHECK(w == v);
  CHECK(read_lines(dir / "vocab.txt").size() == v.size());
  CHECK_THROWS_AS(Vocabulary::load(dir / "missing.txt"), Error);
}

TEST_CASE("encode/decode round trip") {
  const auto lines = generate_toy_corpus(default_toy_grammar(), 200, 3);
  std::vector<Tokens> corpus;
  for (const auto& l : lines) corpus.push_back(normalize(l));
  const Vocabulary v = build_vocab(corpus, 1000);
  for (const auto& tokens : corpus) CHECK(v.decode(v.encode(tokens)) == tokens);
  CHECK(v.decode({special::kBos, special::kPad, v.id("the"), special::kEos}) == Tokens{"the"});
}

TEST_CASE("filter_by_length") {
  auto sentence = [](std::size_t n) { return Tokens(n, "w"); };
  const std::vector<Tokens> corpus = {sentence(31), sentence(30), sentence(1), sentence(45)};
  const auto kept = filter_by_length(corpus, 30);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].size() == 30);
  CHECK(kept[1].size() == 1);
  CHECK(filter_by_length(std::vector<Tokens>{}, 30).empty());
  CHECK_THROWS_AS(filter_by_length(corpus, 0), Error);
}

TEST_CASE("batches and bag-of-words targets") {
  TokenizedSentence ab, aa, five, three;
  ab.ids = {5, 6};
  aa.ids = {5, 5};
  three.ids = {5, 6, 5};
  five.ids = {6, 6, 6, 5, 6};

  const Batch single = make_batch(std::vector<TokenizedSentence>{ab}, 7);
  CHECK(single.dense_bow(0) == std::vector<double>{0, 0, 0, 0, 0, 1, 1});

  const Batch dup = make_batch(std::vector<TokenizedSentence>{aa}, 7);
  CHECK(dup.dense_bow(0) == std::vector<double>{0, 0, 0, 0, 0, 2, 0});

  const Batch b = make_batch(std::vector<TokenizedSentence>{three, five}, 7);
  CHECK(b.max_length == 5);
  CHECK(b.lengths == std::vector<std::size_t>{3, 5});
  for (std::size_t t = 3; t < 5; ++t) CHECK(b.token(0, t) == special::kPad);
  CHECK(b.decoder_input(0, 0) == special::kBos);
  CHECK(b.decoder_input(0, 1) == 5);
  CHECK(b.target(0, 2) == 5);
  CHECK(b.target(0, 3) == special::kEos);
  CHECK(b.target(1, 5) == special::kEos);
  for (std::size_t r = 0; r < 2; ++r) {
    const auto bow = b.dense_bow(r);
    double sum = 0.0;
    for (double c : bow) sum += c;
    CHECK(sum == static_cast<double>(b.lengths[r]));
    CHECK(bow[special::kPad] == 0.0);
    CHECK(bow[special::kBos] == 0.0);
    CHECK(bow[special::kEos] == 0.0);
  }
}

TEST_CASE("encode_batch partitions the corpus") {
  RandomStream rng(7);
  auto sentences = testing::random_sentences(103, 12, 1, 9, rng);
  for (std::size_t i = 0; i < sentences.size(); ++i) sentences[i].surface = std::to_string(i);
  const Vocabulary v(std::vector<std::string>{"<pad>", "<unk>", "<s>", "</s>", "#", "a", "b",
                                              "c", "d", "e", "f", "g"});
  for (std::optional<std::uint64_t> seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{9}}) {
    const auto batches = encode_batch(sentences, v, 10, seed);
    CHECK(batches.size() == 11);
    std::vector<int> seen(sentences.size(), 0);
    for (const auto& batch : batches) {
      CHECK(batch.batch_size <= 10);
      for (std::size_t r = 0; r < batch.batch_size; ++r) {
        const std::size_t src = batch.source_index[r];
        ++seen[src];
        CHECK(batch.lengths[r] == sentences[src].word_count());
      }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
  }
  const auto a = encode_batch(sentences, v, 10, 4);
  const auto b = encode_batch(sentences, v, 10, 4);
  CHECK(a.front().source_index == b.front().source_index);
  const auto unshuffled = encode_batch(sentences, v, 10);
  CHECK(unshuffled.front().source_index[0] == 0);
}

namespace {

// Exhaustive enumeration of slot alternatives; every class symbol yields
// exactly one word.
std::set<std::size_t> enumerate_lengths(const ToyGrammar& g) {
  std::set<std::size_t> lengths{0};
  for (const auto& slot : g.slots) {
    std::set<std::size_t> next;
    for (std::size_t base : lengths)
      for (const auto& alternative : slot) next.insert(base + alternative.size());
    lengths = next;
  }
  return lengths;
}

}  // namespace

TEST_CASE("toy corpus") {
  const ToyGrammar g = default_toy_grammar();
  CHECK(generate_toy_corpus(g, 10, 5) == generate_toy_corpus(g, 10, 5));
  CHECK(generate_toy_corpus(g, 10, 5) != generate_toy_corpus(g, 10, 6));
  CHECK(generate_toy_corpus(g, 0, 5).empty());

  const auto vocab = g.vocabulary();
  CHECK(vocab.size() <= 100);
  const std::set<std::string> allowed(vocab.begin(), vocab.end());

  const std::set<std::size_t> expected = enumerate_lengths(g);
  CHECK(*expected.begin() <= 4);
  CHECK(*expected.rbegin() >= 12);
  const auto reachable = g.reachable_lengths();
  CHECK(std::set<std::size_t>(reachable.begin(), reachable.end()) == expected);

  std::set<std::size_t> observed;
  for (const auto& line : generate_toy_corpus(g, 5000, 1)) {
    const Tokens tokens = normalize(line);
    observed.insert(tokens.size());
    for (const auto& t : tokens) CHECK(allowed.count(t) == 1);
  }
  CHECK(observed == expected);
}
